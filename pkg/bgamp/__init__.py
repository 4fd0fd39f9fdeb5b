"""
bgamp

Analysis toolkit for complementary common-source amplifiers with back-gate
feedback: compact MOS model, DC solver, small-signal gain, noise,
distortion and CMRR under mismatch.
"""

from loguru import logger

__version__ = "0.1.0"

# Library use is silent; the CLI enables records through setup_logging().
logger.disable("bgamp")
