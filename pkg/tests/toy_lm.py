"""Hand-weighted toy language model over {EOS, a, b} used by the decoding tests."""
import numpy as np

EOS, A, B, BOS = 0, 1, 2, 3
ALPHABET = (A, B)


def toy_step(x, scale=2.0, positions=8):
    """Next-token log-probs from a seeded table indexed by (last token, position)."""
    rng = np.random.default_rng([x, 17])
    table = rng.normal(0.0, scale, size=(4, positions, 3))

    def step(prefixes):
        out = []
        for p in prefixes:
            lg = table[p[-1], len(p) - 1]
            out.append(np.concatenate([lg - np.log(np.exp(lg).sum()), [-np.inf]]))
        return np.array(out)

    return step
