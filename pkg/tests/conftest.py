"""Shared fixtures and the central finite-difference harness.

The gradcheck here is the backbone of the gradient acceptance test:
analytic backward vs central differences in float64 with h = 1e-5,
elementwise tolerance |a - n| <= atol + rtol * max(|a|, |n|).
"""
import numpy as np
import pytest

from mlgl import rng as rng_mod
from mlgl.tensor import Tensor

SEEDS = (0, 1, 2, 3, 4)

FD_H = 1e-5
FD_RTOL = 1e-4
FD_ATOL = 1e-7


def fd_gradient(fn, arrays, h=FD_H):
    """Central differences of scalar fn(*arrays) w.r.t. every entry."""
    grads = []
    for k in range(len(arrays)):
        work = [a.copy() for a in arrays]
        g = np.zeros_like(work[k])
        flat, gf = work[k].reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = fn(*work)
            flat[i] = orig - h
            fm = fn(*work)
            flat[i] = orig
            gf[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def compare_grads(analytic, numeric, rtol=FD_RTOL, atol=FD_ATOL, what=""):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    assert analytic.shape == numeric.shape
    bound = atol + rtol * np.maximum(np.abs(analytic), np.abs(numeric))
    err = np.abs(analytic - numeric)
    if not (err <= bound).all():
        worst = int(np.argmax(err - bound))
        raise AssertionError(
            f"gradient mismatch {what} at flat index {worst}: "
            f"analytic {analytic.reshape(-1)[worst]:.10g} vs "
            f"numeric {numeric.reshape(-1)[worst]:.10g}")


def gradcheck(build, arrays, h=FD_H, rtol=FD_RTOL, atol=FD_ATOL):
    """build maps leaf Tensors to one scalar Tensor.

    Must be a pure function of its inputs: anything random inside has to
    be re-seeded identically on every call.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = build(*leaves)
    assert out.data.shape == (), "gradcheck target must be scalar"
    out.backward()

    def fn(*arrs):
        return float(build(*[Tensor(a) for a in arrs]).data)

    numeric = fd_gradient(fn, arrays, h=h)
    for i, (leaf, num) in enumerate(zip(leaves, numeric)):
        assert leaf.grad is not None, f"input {i} got no gradient"
        compare_grads(leaf.grad, num, rtol=rtol, atol=atol, what=f"(input {i})")
    return leaves


def model_gradcheck(model, loss_fn, h=FD_H, rtol=FD_RTOL, atol=FD_ATOL):
    """FD check over every parameter of a model.

    loss_fn() runs a full forward + loss on the model's current weights
    and returns a scalar Tensor; it must be deterministic call to call.
    """
    params = list(model.named_parameters())
    for _, p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {name: p.grad.copy() if p.grad is not None else None
                for name, p in params}

    for name, p in params:
        assert analytic[name] is not None, f"parameter {name} got no gradient"
        flat = p.data.reshape(-1)
        num = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(loss_fn().data)
            flat[i] = orig - h
            fm = float(loss_fn().data)
            flat[i] = orig
            num[i] = (fp - fm) / (2.0 * h)
        compare_grads(analytic[name].reshape(-1), num,
                      rtol=rtol, atol=atol, what=f"({name})")


def fixed_stream(seed=0, sub=0):
    """A fresh, identically seeded generator; safe inside gradcheck builds."""
    return rng_mod.stream(seed, rng_mod.TAG_DROPOUT, sub)


@pytest.fixture(scope="session")
def tiny_taxonomy():
    from mlgl.data import parse_taxonomy
    return parse_taxonomy(
        "alarm = mech\nbark = animal\ndrill = mech\n", origin="<tiny>")


def tiny_model(n_fae=3, n_cae=2, dtype=np.float64, seed=0, fusion="attention",
               dropout_p=0.0, channels=None, embed_dim=4, gcn_layers=1,
               **kwargs):
    from mlgl.graph import MlglModel
    if channels is None:
        channels = [[2], [3]]
    gen = rng_mod.stream(seed, rng_mod.TAG_INIT)
    return MlglModel(n_fae, n_cae, gen, np.dtype(dtype), channels=channels,
                     embed_dim=embed_dim, gcn_layers=gcn_layers,
                     dropout_p=dropout_p, fusion_mode=fusion, **kwargs)


@pytest.fixture(scope="session")
def synth_corpus_dir(tmp_path_factory):
    """Small on-disk corpus in the expected layout, shared across tests."""
    from mlgl.data import load_taxonomy, synth_dataset, write_synth_dataset
    out = tmp_path_factory.mktemp("corpus")
    tax = load_taxonomy()
    clips = synth_dataset(seed=11, n=12, sample_rate=8000, duration=0.5)
    write_synth_dataset(out, clips, 8000, tax)
    return out
