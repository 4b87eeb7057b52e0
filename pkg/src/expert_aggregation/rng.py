"""Named, replayable random streams.

Every stream is a Philox counter-based generator seeded from
``SeedSequence(seed, spawn_key=(purpose, index))``, so the draws for one
purpose (bootstrap indices, expert ``k``'s noise, synthetic data) never depend
on how many draws another purpose consumed.
"""

from __future__ import annotations

import numpy as np

RNG_ALGORITHM = "numpy.Philox(4x64-10)/SeedSequence"

BOOTSTRAP = 0
EXPERT_NOISE = 1
SYNTHETIC_DATA = 2


def stream(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence(int(seed), spawn_key=(purpose, index))
    return np.random.Generator(np.random.Philox(seq))


def get_state(gen: np.random.Generator) -> dict:
    """JSON-friendly copy of a Philox generator state."""
    state = gen.bit_generator.state
    return {
        "bit_generator": state["bit_generator"],
        "state": {key: [int(v) for v in val] for key, val in state["state"].items()},
        "buffer": [int(v) for v in state["buffer"]],
        "buffer_pos": int(state["buffer_pos"]),
        "has_uint32": int(state["has_uint32"]),
        "uinteger": int(state["uinteger"]),
    }


def from_state(state: dict) -> np.random.Generator:
    bitgen = np.random.Philox()
    bitgen.state = {
        "bit_generator": state["bit_generator"],
        "state": {
            key: np.array(val, dtype=np.uint64) for key, val in state["state"].items()
        },
        "buffer": np.array(state["buffer"], dtype=np.uint64),
        "buffer_pos": state["buffer_pos"],
        "has_uint32": state["has_uint32"],
        "uinteger": state["uinteger"],
    }
    return np.random.Generator(bitgen)
