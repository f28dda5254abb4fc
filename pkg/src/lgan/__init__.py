"""Lung segmentation with a U-Net generator and WGAN-style critics."""
from .critics import CriticSpec, CriticVariant, build_critic, wire_inputs
from .generator import GeneratorSpec, build_generator
from .losses import ClipConfig, bce, clip_parameters, critic_loss, generator_loss
from .metrics import dice, dice_3d, hausdorff, iou
from .phantom import PhantomConfig, generate
from .trainer import TrainConfig, evaluate_checkpoint, train

__version__ = "0.1.0"
