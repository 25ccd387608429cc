"""One-bit spatial sigma-delta MIMO precoding.

A library and CLI for transmit-side one-bit signaling over large uniform
linear arrays: first-order spatial sigma-delta modulators (plain, dithered,
angle-steered, and channel-matched), amplitude-limited precoders (conjugate
beamforming, zero forcing, symbol-level margin maximization), closed-form
noise/SNR/error analysis, and a reproducible Monte Carlo simulator.
"""

from . import analysis, channel, modulator, optim, precoder, sim

__version__ = "0.1.0"

__all__ = ["analysis", "channel", "modulator", "optim", "precoder", "sim",
           "__version__"]
