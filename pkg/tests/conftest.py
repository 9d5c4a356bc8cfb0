"""Shared test helpers: finite-difference gradient checking.

All gradient tests compare tape gradients against central differences
(h = 1e-5 unless stated).  Functions under test take Tensor arguments
and return a scalar Tensor; they must be re-evaluable at perturbed
inputs, so anything discrete inside them (neighbor tables, assignments)
has to be frozen by the caller.
"""

import numpy as np
import pytest

from ltecorr.tensor import Tape, Tensor


def rel_err(got, want):
    """Norm-based relative error, agnostic to near-zero denominators."""
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    denom = max(1.0, float(np.linalg.norm(want)))
    return float(np.linalg.norm(got - want)) / denom


def eval_scalar(fn, arrays):
    """fn applied to untracked tensors, returned as a float."""
    out = fn(*[Tensor(a) for a in arrays])
    return out.item()


def tape_gradients(fn, arrays):
    """Analytic gradients of fn at arrays, one per input."""
    tape = Tape()
    leaves = [tape.leaf(a) for a in arrays]
    loss = fn(*leaves)
    grads = tape.backward(loss)
    return [grads[leaf] for leaf in leaves]


def fd_gradient(fn, arrays, which, h=1e-5):
    """Central-difference gradient wrt arrays[which]."""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    target = base[which]
    grad = np.zeros_like(target)
    flat = grad.reshape(-1)
    tflat = target.reshape(-1)
    for j in range(tflat.size):
        keep = tflat[j]
        tflat[j] = keep + h
        up = eval_scalar(fn, base)
        tflat[j] = keep - h
        down = eval_scalar(fn, base)
        tflat[j] = keep
        flat[j] = (up - down) / (2.0 * h)
    return grad


def assert_grads_match(fn, arrays, rel=1e-6, h=1e-5):
    """Tape gradients of fn at arrays agree with central differences."""
    analytic = tape_gradients(fn, arrays)
    for i in range(len(arrays)):
        numeric = fd_gradient(fn, arrays, i, h=h)
        err = rel_err(analytic[i], numeric)
        assert err < rel, (
            f"gradient mismatch for input {i}: rel err {err:.3e} "
            f"(tolerance {rel:.0e})"
        )


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture(scope="session")
def seed0_corpus():
    """The standard benchmark corpus: alternating sphere/torus pairs,
    128 points, warp 0.15, pair index i seeded [0, i].  Returns
    (train_pairs, held_out_pairs) with indices 0..99 and 100..109; the
    held-out recipe is the training recipe continued, never trained on.
    """
    from ltecorr.pointcloud import gen_pair

    shapes = ("sphere", "torus")

    def build(lo, hi):
        return [
            gen_pair(shapes[i % 2], 128, 0.15, seed=[0, i]) for i in range(lo, hi)
        ]

    return build(0, 100), build(100, 110)
