from .losses import (
    LossWeights, adversarial_loss, discriminator_loss, generator_adversarial_loss,
    perceptual_loss, reconstruction_loss, total_loss,
)
from .models import (
    Discriminator, Extractor, FeatureNet, Generator, ModelBundle, ModelConfig,
    discriminator_forward, extractor_forward, generator_forward,
)
