"""Deterministic derivation of per-purpose random streams from one master seed."""

import zlib

import numpy as np

# Purpose tags used across the pipeline; hashing the tag keeps streams
# independent even when epoch indices collide.
INIT = "init"
AUGMENT = "augment"
SUBSAMPLE = "subsample"
PROBE = "probe"
SBM = "sbm"
PERTURB = "perturb"


def derive_rng(master_seed, purpose, epoch=0):
    """A numpy Generator fully determined by (master_seed, purpose, epoch)."""
    tag = zlib.crc32(purpose.encode("utf-8"))
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFF, tag, int(epoch)])
    return np.random.Generator(np.random.PCG64(ss))
