import numpy as np
import pytest
import torch


def central_fd(fn, params, h=1e-6):
    """Central finite-difference gradient of scalar ``fn()`` w.r.t. each tensor in ``params``."""
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat, gflat = p.view(-1), g.view(-1)
            for i in range(flat.numel()):
                old = flat[i].item()
                flat[i] = old + h
                up = float(fn())
                flat[i] = old - h
                down = float(fn())
                flat[i] = old
                gflat[i] = (up - down) / (2 * h)
            grads.append(g)
    return grads


def autograd_grad(fn, params):
    for p in params:
        p.grad = None
    out = fn()
    return list(torch.autograd.grad(out, params))


def rel_error(a, b):
    a = torch.cat([t.reshape(-1) for t in a])
    b = torch.cat([t.reshape(-1) for t in b])
    return float((a - b).norm() / max(a.norm(), b.norm(), 1e-12))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(0)


def tiny_config(root, out_dir="runs/tiny", **train):
    """Smallest configuration that exercises every stage; seconds per epoch on a CPU."""
    from revanon.config import from_dict

    return from_dict({
        "data": {"root": str(root), "image_size": [32, 16]},
        "model": {
            "generator": {"base_width": 4, "depth": 2, "image_size": [32, 16]},
            "discriminator": {"base_width": 4, "n_layers": 2},
            "reid": {"backbone": "small", "widths": [4, 8, 8, 8], "num_classes": 4,
                     "pretrained": False},
        },
        "schedule": {"warmup_epochs": 2, "decay_epochs": [3, 4]},
        "train": {"epochs": 2, "P": 4, "K": 2, "pretrain_epochs": 1, **train},
        "out_dir": str(out_dir),
    })


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    from revanon.synthetic import make_toy_corpus

    root = tmp_path_factory.mktemp("tiny_corpus")
    make_toy_corpus(root, n_ids=4, per_id=10, n_cams=3, size=(32, 16), seed=0)
    return root


ACCEPTANCE_LINES = []


def record_criterion(name, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
