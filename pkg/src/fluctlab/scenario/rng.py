"""Addressable random substreams.

Every stream is a PCG64 generator seeded by ``SeedSequence(master,
spawn_key=(kind, *ids))``.  Streams are therefore addressed by name rather
than by creation order: a replica's draws do not depend on how many other
replicas exist, which worker ran it, or in which order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STREAM_KINDS = {
    "common": 0,        # common-noise path W, ids: (path_id,)
    "initial": 1,       # initial positions, ids: (replica, N)
    "idio": 2,          # idiosyncratic increments, ids: (replica, N)
    "idio_particle": 3, # per-particle idiosyncratic increments, ids: (replica, N, particle)
    "white": 4,         # space-time white noise of the fluctuation SPDE, ids: (run,)
    "eta0": 5,          # initial fluctuation field, ids: (run,)
    "elln": 6,          # exponential-moment samples, ids: (N, p)
    "bridge": 7,        # Brownian-bridge refinement, ids: (path_id, level)
    "aux": 8,           # anything else (tests, diagnostics)
}


@dataclass(frozen=True)
class RngPlan:
    """Seed plan for one experiment.

    Idiosyncratic increments default to one stream per (replica, N): particle
    i receives row i of each step's (N, m) draw.  ``per_particle=True``
    switches to one stream per particle, which makes the assignment of
    streams to particles explicit (used for exchangeability checks).
    """

    seed: int
    per_particle: bool = False

    def stream(self, kind: str, *ids: int) -> np.random.Generator:
        try:
            code = STREAM_KINDS[kind]
        except KeyError:
            raise ValueError(f"unknown stream kind {kind!r}") from None
        key = (code,) + tuple(int(i) for i in ids)
        if any(i < 0 for i in key):
            raise ValueError("stream ids must be nonnegative")
        ss = np.random.SeedSequence(int(self.seed), spawn_key=key)
        return np.random.Generator(np.random.PCG64(ss))

    def common_path_id(self, replica: int) -> int:
        """Path id used by unconditional campaigns (one W per replica)."""
        return int(replica)

    def describe(self) -> dict:
        return {
            "master_seed": int(self.seed),
            "generator": "PCG64",
            "addressing": "SeedSequence(master, spawn_key=(kind, *ids))",
            "kinds": dict(STREAM_KINDS),
            "idiosyncratic": "per_particle" if self.per_particle else "per_replica_block",
        }
