import zlib

import numpy as np

# Named sub-streams keep components independent of each other's draw counts.
STREAMS = ("init", "shuffle", "negatives", "synthesis", "split", "gradcheck")


def stream(seed: int, name: str) -> np.random.Generator:
    """Generator for the sub-stream ``name`` of a master ``seed``."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(key,)))


def derive_seed(seed: int, *parts) -> int:
    """Deterministic child seed, e.g. one per run of a sweep."""
    words = [int(seed)] + [zlib.crc32(str(p).encode("utf-8")) for p in parts]
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint32)[0])
