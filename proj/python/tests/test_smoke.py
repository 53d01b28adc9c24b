import numpy as np
import pytest

import rbno


def test_mesh_and_covariance():
    mesh = rbno.assemble_mesh(2)
    assert mesh.dim == 3
    np.testing.assert_allclose(mesh.M, 0.5 * np.array([[1 / 3, 1 / 6, 0], [1 / 6, 2 / 3, 1 / 6], [0, 1 / 6, 1 / 3]]))
    cov = rbno.build_covariance(rbno.assemble_mesh(16), 2.0, 10.0, 1.0)
    assert np.all(np.diff(cov.mu) <= 0)
    xi = np.arange(17.0)
    np.testing.assert_allclose(rbno.whiten(cov, rbno.unwhiten(cov, xi)), xi, atol=1e-10)
    with pytest.raises(ValueError):
        rbno.build_covariance(mesh, 0.0, 1.0, 1.0)


def test_dataset_bases_and_surrogate():
    bench = rbno.make_benchmark(rbno.ProblemKind.SemilinearElliptic, 32)
    data = rbno.generate_dataset(bench, 40, 1)
    assert data.X.shape == (33, 40)
    assert len(data.J) == 40
    out = rbno.output_pca(data, bench.cov.mesh, 5)
    inp = rbno.input_dis(data, bench.cov, 5)
    recon = rbno.reconstruction_error(data, bench.cov, out, rbno.Reconstruction.Output)
    assert recon.value == pytest.approx(rbno.trailing_sum(out, 5) / out.eigs.sum(), rel=1e-8)

    net = rbno.make_network(5, 3, 10)
    rbno.xavier_init(net, 3)
    s = rbno.Surrogate(inp, out, net)
    y = rbno.predict(s, data.X[:, 0])
    assert y.shape == (33,)
    res = rbno.evaluate_surrogate(data, bench.cov, s)
    assert res.l2.value > 0 and res.h1.value > 0


def test_theory_and_config():
    rows = rbno.theory_suite(8, 2)
    assert all(r.k_d <= r.degree + 1e-9 for r in rows)
    cfg = rbno.preset("desk", rbno.ProblemKind.SteadyBurgers)
    assert cfg["network"]["depth"] == 4
    assert rbno.csv_header().startswith("metric,problem")
