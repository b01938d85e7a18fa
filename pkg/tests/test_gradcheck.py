import numpy as np

from pcdcomplete.diffcore import gradcheck


def test_every_registered_op_passes_finite_differences():
    reports = gradcheck.check_all(trials=10, seed=123)
    failed = [r.op for r in reports if not r.passed]
    assert not failed, f"gradient check failures: {failed}"


def test_registry_covers_chamfer_and_batchnorm():
    assert "chamfer" in gradcheck.REGISTRY
    assert "batchnorm_1d" in gradcheck.REGISTRY


def test_chamfer_trials_reject_tie_adjacent_configs():
    rng = np.random.default_rng(9)
    for _ in range(5):
        (a, b), _ = gradcheck._trial_chamfer(rng), None
        a, b = a
        d2 = ((a.data[:, None, :] - b.data[None, :, :]) ** 2).sum(axis=2)
        for mat in (d2, d2.T):
            s = np.sort(mat, axis=1)
            assert ((s[:, 1] - s[:, 0]) > 0.05).all()
