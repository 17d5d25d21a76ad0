"""Counter-based random streams.

Every consumer derives its own Philox stream from (seed, tag, sub), so
adding or reordering one consumer never shifts the draws of another and
any epoch can be reproduced in isolation.
"""
import numpy as np

TAG_INIT = 1
TAG_SHUFFLE = 2
TAG_DROPOUT = 3
TAG_SYNTH = 4
TAG_SPLIT = 5

_MASK = (1 << 64) - 1
_MASK32 = (1 << 32) - 1


def stream(seed: int, tag: int, sub: int = 0) -> np.random.Generator:
    key = np.array([seed & _MASK, ((tag & _MASK32) << 32) | (sub & _MASK32)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def state_blob(gen: np.random.Generator) -> dict:
    """Bit-generator state as plain JSON-serializable types."""
    def convert(obj):
        if isinstance(obj, dict):
            return {k: convert(v) for k, v in obj.items()}
        if isinstance(obj, np.ndarray):
            return [int(v) for v in obj.tolist()]
        if isinstance(obj, np.integer):
            return int(obj)
        return obj

    return convert(gen.bit_generator.state)
