from .stargan import (BaselineSpec, StarGANDiscriminator, StarGANGenerator, StarGANModel, StarGANTrainer,
                      build_stargan, build_stargan_mcd)
from .cgan_mnist import CGANConfig, CGANGenerator, CGANMCD, run_cgan_mcd_mnist
from .probe import run_stargan_failure_probe

__all__ = [
    "BaselineSpec", "StarGANDiscriminator", "StarGANGenerator", "StarGANModel", "StarGANTrainer",
    "build_stargan", "build_stargan_mcd", "CGANConfig", "CGANGenerator", "CGANMCD", "run_cgan_mcd_mnist",
    "run_stargan_failure_probe",
]
