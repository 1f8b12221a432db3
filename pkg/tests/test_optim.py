import numpy as np

from inreg.autodiff import Tape, Tensor
from inreg.optim import AdamW


def test_single_step_known_value():
    # hand-derived: m_hat = 0.5, v_hat = 0.25, so the update is
    # lr * (0.5 / (0.5 + 1e-8) + 0.01 * 1.0)
    p = Tensor(1.0, requires_grad=True)
    p.grad = np.asarray(0.5)
    AdamW([p]).step()
    assert abs(p.data - 0.99989900000200005) < 1e-15


def test_step_skips_params_without_grad():
    p = Tensor(2.0, requires_grad=True)
    opt = AdamW([p], weight_decay=0.5)
    opt.step()
    assert p.data == 2.0


def test_pure_decay_with_zero_grad():
    p = Tensor(3.0, requires_grad=True)
    opt = AdamW([p], lr=0.1, weight_decay=0.2)
    for _ in range(5):
        p.grad = np.asarray(0.0)
        opt.step()
    assert abs(p.data - 3.0 * (1.0 - 0.1 * 0.2) ** 5) < 1e-12


def test_trajectory_matches_reference_implementation():
    rng = np.random.default_rng(0)
    shape = (3, 2)
    start = rng.standard_normal(shape)
    grads = [rng.standard_normal(shape) for _ in range(10)]

    p = Tensor(start.copy(), requires_grad=True)
    opt = AdamW([p], lr=0.05, betas=(0.8, 0.95), eps=1e-6, weight_decay=0.03)
    for g in grads:
        p.grad = g.copy()
        opt.step()

    # independent re-implementation, scalar loops
    ref = start.copy()
    m = np.zeros(shape)
    v = np.zeros(shape)
    for t, g in enumerate(grads, start=1):
        m = 0.8 * m + 0.2 * g
        v = 0.95 * v + 0.05 * g * g
        mh = m / (1 - 0.8**t)
        vh = v / (1 - 0.95**t)
        ref = ref - 0.05 * (mh / (np.sqrt(vh) + 1e-6) + 0.03 * ref)
    np.testing.assert_allclose(p.data, ref, rtol=0, atol=1e-14)


def test_zero_grad_clears_all():
    a = Tensor(1.0, requires_grad=True)
    b = Tensor(2.0, requires_grad=True)
    a.grad = np.asarray(1.0)
    b.grad = np.asarray(1.0)
    AdamW([a, b]).zero_grad()
    assert a.grad is None and b.grad is None


def test_minimizes_simple_quadratic():
    x = Tensor(1.5, requires_grad=True)
    opt = AdamW([x], lr=0.05, weight_decay=0.0)
    for _ in range(400):
        with Tape() as tape:
            loss = x * x
        tape.backward(loss)
        opt.step()
        opt.zero_grad()
    assert abs(x.data) < 1e-3
