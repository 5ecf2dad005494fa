import numpy as np
import pytest

from lptk.duality import Exponents, lp_norm
from lptk.kernels import (
    FeatureOperator,
    TensorKernelSpec,
    build_gram,
    kernel_predict,
    quartic_value_and_gradient,
)
from lptk.losses import LossSpec
from lptk.solvers import (
    CertificateError,
    SolverConfig,
    StagnationError,
    duality_gap,
    error_bound_diagnostic,
    iterations_to_precision,
    kkt_residual,
    primal_fista,
    primal_gd_linesearch,
    primal_objective,
    recover_primal,
    ridge_closed_form,
    solution_from_features,
    solution_from_gram,
    solve_dual_ls_q4,
    solve_dual_prox_grad,
    verify_decay_certificate,
    write_trace_csv,
)

E4 = Exponents.from_q(4)
SQUARE = LossSpec("square")


def _bisect_cubic_root(c):
    """Root of a^3 + a = c by plain bisection (independent oracle)."""
    lo, hi = 0.0, max(1.0, c)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid**3 + mid < c:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _small_instance(seed=7, n=12, d=20, normalize=True):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    if normalize:
        X = X / np.sqrt(d)
    w = np.zeros(d)
    w[rng.choice(d, 3, replace=False)] = rng.standard_normal(3)
    y = X @ w + 0.05 * rng.standard_normal(n)
    return X, y, rng


class TestAlgorithm1:
    def test_zero_data(self):
        g = build_gram([[1.0]], TensorKernelSpec("linear"))
        cfg = SolverConfig(gamma=3.0, exps=E4, tol=1e-12)
        st = solve_dual_ls_q4(g, [0.0], cfg)
        assert st.alpha[0] == 0.0 and st.objective == 0.0 and st.converged

    def test_orthonormal_instance_against_bisection(self):
        g = build_gram(np.eye(2), TensorKernelSpec("linear"))
        cfg = SolverConfig(gamma=1.0, exps=E4, tol=1e-14, max_iter=2000)
        st = solve_dual_ls_q4(g, [1.0, 1.0], cfg)
        root = _bisect_cubic_root(1.0)
        np.testing.assert_allclose(st.alpha, [root, root], atol=1e-7)

    def test_monotone_objective(self):
        X, y, _ = _small_instance()
        g = build_gram(X, TensorKernelSpec("linear"))
        cfg = SolverConfig(gamma=5.0, exps=E4, tol=1e-14, max_iter=5000)
        st = solve_dual_ls_q4(g, y, cfg)
        objs = np.asarray(st.history.objectives)
        # strict test modulo evaluation roundoff at the floor
        assert np.all(np.diff(objs) <= 64 * np.finfo(float).eps * (1 + np.abs(objs[:-1])))

    def test_stepsizes_positive(self):
        X, y, _ = _small_instance()
        g = build_gram(X, TensorKernelSpec("linear"))
        st = solve_dual_ls_q4(g, y, SolverConfig(gamma=5.0, exps=E4, tol=1e-12))
        lams = [l for l in st.history.lams if np.isfinite(l)]
        assert min(lams) > 0 and st.lambda_last > 0

    def test_certificate_holds_on_run(self):
        X, y, _ = _small_instance(seed=9)
        g = build_gram(X, TensorKernelSpec("linear"))
        cfg = SolverConfig(gamma=5.0, exps=E4, tol=1e-14, max_iter=5000,
                           check_certificate=True)
        st = solve_dual_ls_q4(g, y, cfg)  # raises CertificateError on violation
        viol = verify_decay_certificate(
            st.history.objectives, st.history.lams, min(st.history.objectives),
            5.0, st.delta,
        )
        assert viol <= 1e-8

    def test_certificate_detects_fabricated_violation(self):
        # a sequence that decays slower than the guaranteed factor
        objs = [1.0, 0.999, 0.998]
        lams = [np.nan, 2.0, 2.0]
        viol = verify_decay_certificate(objs, lams, 0.0, gamma=1.0, delta=0.5)
        assert viol > 1e-3

    def test_lambda_bar_bound_enforced(self):
        cfg = SolverConfig(gamma=1.0, exps=E4, delta=0.5, lambda_bar=1.01)
        with pytest.raises(ValueError):
            cfg.resolve_ls()  # sup = 1/(2*0.5) = 1

    def test_stagnation_error(self):
        X, y, _ = _small_instance(normalize=False)
        g = build_gram(X, TensorKernelSpec("linear"))
        cfg = SolverConfig(gamma=1.0, exps=E4, tol=1e-14, delta=0.9,
                           lambda_bar=4.99, max_backtracks=1)
        with pytest.raises(StagnationError):
            solve_dual_ls_q4(g, y, cfg)

    def test_requires_q4(self):
        X, y, _ = _small_instance()
        g = build_gram(X, TensorKernelSpec("linear"))
        with pytest.raises(ValueError):
            solve_dual_ls_q4(g, y, SolverConfig(gamma=1.0, exps=Exponents.from_q(6)))


class TestAlgorithm2:
    def test_square_matches_algorithm1_iterates(self):
        X, y, _ = _small_instance()
        g = build_gram(X, TensorKernelSpec("linear"))
        cfg1 = SolverConfig(gamma=5.0, exps=E4, tol=1e-300, max_iter=25,
                            record_alphas=True)
        delta, lam_bar = cfg1.resolve_ls()
        cfg2 = SolverConfig(gamma=5.0, exps=E4, tol=1e-300, max_iter=25,
                            delta=delta, lambda_bar=lam_bar, record_alphas=True)
        st1 = solve_dual_ls_q4(g, y, cfg1)
        st2 = solve_dual_prox_grad(g, y, SQUARE, cfg2)
        assert len(st1.alphas) == len(st2.alphas)
        for a1, a2 in zip(st1.alphas, st2.alphas):
            np.testing.assert_allclose(a1, a2, rtol=1e-10, atol=1e-12)

    def test_square_same_optimum_as_algorithm1(self):
        X, y, _ = _small_instance(seed=3)
        g = build_gram(X, TensorKernelSpec("linear"))
        st1 = solve_dual_ls_q4(g, y, SolverConfig(gamma=2.0, exps=E4, tol=1e-30, max_iter=50_000))
        st2 = solve_dual_prox_grad(g, y, SQUARE, SolverConfig(gamma=2.0, exps=E4, tol=1e-30, max_iter=50_000))
        np.testing.assert_allclose(st1.alpha, st2.alpha, atol=1e-8)

    def test_hinge_scalar_boundary_example(self):
        phi = FeatureOperator.identity([[1.0]])
        cfg = SolverConfig(gamma=1.0, exps=E4, tol=1e-14, max_iter=2000)
        st = solve_dual_prox_grad(phi, [1.0], LossSpec("hinge"), cfg)
        # argmin over [0,1] of a^4/4 - a sits at the boundary a = 1
        assert st.alpha[0] == pytest.approx(1.0, abs=1e-10)

    def test_hinge_grid_oracle(self):
        phi = FeatureOperator.identity([[1.0], [0.5]])
        y = np.array([1.0, -1.0])
        gamma = 1.0
        cfg = SolverConfig(gamma=gamma, exps=E4, tol=1e-15, max_iter=20000)
        st = solve_dual_prox_grad(phi, y, LossSpec("hinge"), cfg)
        grid = np.linspace(0, gamma, 401)
        best, besta = np.inf, None
        for a1 in grid:
            u = a1 * 1.0 + np.linspace(-gamma, 0, 401) * 0.5
            vals = u**4 / 4 - (a1 + np.linspace(-gamma, 0, 401) * (-1.0))
            j = int(np.argmin(vals))
            if vals[j] < best:
                best, besta = vals[j], (a1, np.linspace(-gamma, 0, 401)[j])
        np.testing.assert_allclose(st.alpha, besta, atol=5e-3)

    def test_logistic_interior(self):
        X, y0, rng = _small_instance(seed=11)
        y = np.sign(y0)
        y[y == 0] = 1.0
        gamma = 2.0
        cfg = SolverConfig(gamma=gamma, exps=E4, tol=1e-14, max_iter=100000)
        st = solve_dual_prox_grad(FeatureOperator.identity(X), y, LossSpec("logistic"), cfg)
        assert np.all(y * st.alpha > 0.0)
        assert np.all(y * st.alpha < gamma)

    @pytest.mark.parametrize("kind", ["square", "huber", "eps_insensitive", "logistic", "hinge"])
    def test_monotone_objective_all_losses(self, kind):
        X, y0, rng = _small_instance(seed=13)
        loss = LossSpec(kind)
        y = np.sign(y0) if loss.is_margin else y0
        if loss.is_margin:
            y[y == 0] = 1.0
        cfg = SolverConfig(gamma=2.0, exps=E4, tol=1e-15, max_iter=100000)
        st = solve_dual_prox_grad(FeatureOperator.identity(X), y, loss, cfg)
        objs = np.asarray(st.history.objectives)
        assert np.all(np.diff(objs) <= 64 * np.finfo(float).eps * (1 + np.abs(objs[:-1])))
        lams = [l for l in st.history.lams if np.isfinite(l)]
        assert min(lams) > 0

    def test_feature_path_any_q(self):
        X, y, _ = _small_instance(seed=17)
        exps = Exponents.from_p(1.1)  # q = 11, kernel path impossible
        cfg = SolverConfig(gamma=2.0, exps=exps, tol=1e-12, max_iter=20000)
        st = solve_dual_prox_grad(FeatureOperator.identity(X), y, SQUARE, cfg)
        assert st.converged
        sol = solution_from_features(FeatureOperator.identity(X), st.alpha, y, SQUARE, 2.0, exps)
        assert sol.gap <= 1e-11 * (1 + abs(sol.primal_value))


class TestCrossPath:
    @pytest.mark.parametrize("kind,degree", [("linear", 1), ("polynomial", 2)])
    def test_gram_and_feature_solvers_agree(self, kind, degree):
        rng = np.random.default_rng(31)
        X = rng.standard_normal((10, 4)) / 2.0
        w = np.zeros(4 if kind == "linear" else 10)
        y = rng.standard_normal(10)
        spec = TensorKernelSpec(kind, degree=degree)
        g = build_gram(X, spec)
        if kind == "linear":
            phi = FeatureOperator.identity(X)
        else:
            phi = FeatureOperator.poly2(X)
        cfg = SolverConfig(gamma=2.0, exps=E4, tol=1e-30, max_iter=50_000)
        delta, lam_bar = cfg.resolve_ls()
        cfg_f = SolverConfig(gamma=2.0, exps=E4, tol=1e-30, max_iter=50_000,
                             delta=delta, lambda_bar=lam_bar)
        st_g = solve_dual_ls_q4(g, y, cfg)
        st_f = solve_dual_prox_grad(phi, y, SQUARE, cfg_f)
        np.testing.assert_allclose(st_g.alpha, st_f.alpha, atol=1e-8)

    def test_exponential_kernel_gram_path(self):
        rng = np.random.default_rng(32)
        X = rng.uniform(-0.6, 0.6, (8, 3))
        y = rng.standard_normal(8)
        g = build_gram(X, TensorKernelSpec("exponential"))
        cfg = SolverConfig(gamma=2.0, exps=E4, tol=1e-13, max_iter=20000)
        st = solve_dual_ls_q4(g, y, cfg)
        sol = solution_from_gram(g, st.alpha, y, SQUARE, 2.0, E4)
        assert sol.w is None
        assert sol.gap <= 1e-11 * (1 + abs(sol.primal_value))
        assert sol.kkt_residual <= 1e-6
        # predictions at training points equal the fitted values (the
        # quartic gradient), tying the representer sum to the solve
        _, omega = quartic_value_and_gradient(g, st.alpha)
        for i in range(8):
            pred = kernel_predict(X, st.alpha, X[i], TensorKernelSpec("exponential"))
            assert pred == pytest.approx(omega[i], rel=1e-8, abs=1e-10)


class TestPrimalRecovery:
    def test_zero_alpha(self):
        phi = FeatureOperator.identity(np.eye(3))
        np.testing.assert_array_equal(recover_primal(phi, np.zeros(3), 4), np.zeros(3))

    def test_identity_features(self):
        phi = FeatureOperator.identity(np.eye(2))
        np.testing.assert_allclose(recover_primal(phi, [1.0, -2.0], 4), [1.0, -8.0])

    def test_orthonormal_kkt(self):
        g = build_gram(np.eye(2), TensorKernelSpec("linear"))
        cfg = SolverConfig(gamma=1.0, exps=E4, tol=1e-30, max_iter=50_000)
        st = solve_dual_ls_q4(g, [1.0, 1.0], cfg)
        phi = FeatureOperator.identity(np.eye(2))
        w = recover_primal(phi, st.alpha, 4)
        root = _bisect_cubic_root(1.0)
        np.testing.assert_allclose(w, [root**3, root**3], atol=1e-7)
        assert kkt_residual(phi, w, st.alpha, np.array([1.0, 1.0]), SQUARE, 1.0, E4) <= 1e-8


class TestGapAndKkt:
    def test_zero_pair_gap(self):
        rng = np.random.default_rng(33)
        X = rng.standard_normal((5, 3))
        y = rng.standard_normal(5)
        phi = FeatureOperator.identity(X)
        got = duality_gap(phi, np.zeros(3), np.zeros(5), y, SQUARE, 2.0, E4)
        assert got == pytest.approx(2.0 / 2.0 * float(y @ y))

    def test_gap_positive_off_optimum(self):
        X, y, rng = _small_instance(seed=37)
        phi = FeatureOperator.identity(X)
        cfg = SolverConfig(gamma=2.0, exps=E4, tol=1e-15, max_iter=50000)
        st = solve_dual_prox_grad(phi, y, SQUARE, cfg)
        w = recover_primal(phi, st.alpha, 4)
        base = duality_gap(phi, w, st.alpha, y, SQUARE, 2.0, E4)
        pert = st.alpha + 1e-3 * rng.standard_normal(len(st.alpha))
        wp = recover_primal(phi, pert, 4)
        assert duality_gap(phi, wp, pert, y, SQUARE, 2.0, E4) > max(base, 0)

    def test_kkt_zero_data(self):
        phi = FeatureOperator.identity(np.zeros((3, 2)))
        got = kkt_residual(phi, np.zeros(2), np.zeros(3), np.zeros(3), SQUARE, 1.0, E4)
        assert got == 0.0

    def test_kkt_square_direct_formula(self):
        rng = np.random.default_rng(38)
        X = rng.standard_normal((6, 4))
        y = rng.standard_normal(6)
        a = rng.standard_normal(6)
        phi = FeatureOperator.identity(X)
        w = recover_primal(phi, a, 4)  # link term vanishes by construction
        t = phi.apply(w)
        want = np.max(np.abs(-a / 1.5 - (t - y)))
        got = kkt_residual(phi, w, a, y, SQUARE, 1.5, E4)
        assert got == pytest.approx(want, rel=1e-12)


class TestPrimalBaselines:
    def test_gd_matches_ridge_at_p2(self):
        X, y, _ = _small_instance(seed=41)
        phi = FeatureOperator.identity(X)
        e2 = Exponents.from_p(2.0)
        w_ridge = ridge_closed_form(phi, y, 3.0)
        f_star = primal_objective(phi, w_ridge, y, SQUARE, 3.0, e2)
        cfg = SolverConfig(gamma=3.0, exps=e2)
        gd = primal_gd_linesearch(phi, y, cfg, max_iter=50_000, f_target=f_star,
                                  rel_precision=1e-12)
        assert gd.converged
        np.testing.assert_allclose(gd.w, w_ridge, atol=1e-4)

    def test_gd_zero_data(self):
        phi = FeatureOperator.identity(np.zeros((3, 2)))
        cfg = SolverConfig(gamma=1.0, exps=E4)
        gd = primal_gd_linesearch(phi, np.zeros(3), cfg, f_target=0.0)
        assert gd.iterations == 0 and np.all(gd.w == 0)

    def test_gd_requires_square(self):
        phi = FeatureOperator.identity(np.eye(2))
        with pytest.raises(ValueError):
            primal_gd_linesearch(phi, np.ones(2), SolverConfig(gamma=1.0, exps=E4),
                                 loss=LossSpec("hinge"))

    def test_fista_matches_ridge_at_p2(self):
        X, y, _ = _small_instance(seed=43)
        phi = FeatureOperator.identity(X)
        e2 = Exponents.from_p(2.0)
        w_ridge = ridge_closed_form(phi, y, 3.0)
        f_star = primal_objective(phi, w_ridge, y, SQUARE, 3.0, e2)
        fi = primal_fista(phi, y, SolverConfig(gamma=3.0, exps=e2),
                          f_target=f_star, rel_precision=1e-12, max_iter=100_000)
        assert fi.converged
        np.testing.assert_allclose(fi.w, w_ridge, atol=1e-4)

    def test_fista_agrees_with_dual_certificate_p43(self):
        X, y, _ = _small_instance(seed=47)
        phi = FeatureOperator.identity(X)
        cfg = SolverConfig(gamma=3.0, exps=E4, tol=1e-15, max_iter=50_000)
        st = solve_dual_prox_grad(phi, y, SQUARE, cfg)
        wbar = recover_primal(phi, st.alpha, 4)
        f_star = primal_objective(phi, wbar, y, SQUARE, 3.0, E4)
        fi = primal_fista(phi, y, cfg, f_target=f_star, rel_precision=1e-13,
                          max_iter=200_000)
        assert fi.converged
        assert lp_norm(fi.w - wbar, E4.p) <= 1e-6
        # weak duality: primal value never below the dual certificate
        assert np.all(np.asarray(fi.history.objectives) >= -st.objective - 1e-9)

    def test_fista_monotone_trace(self):
        X, y, _ = _small_instance(seed=53)
        phi = FeatureOperator.identity(X)
        fi = primal_fista(phi, y, SolverConfig(gamma=3.0, exps=E4), max_iter=500)
        objs = np.asarray(fi.history.objectives)
        assert np.all(np.diff(objs) <= 1e-12 * (1 + np.abs(objs[:-1])))

    def test_fista_primal_dual_agreement_p54(self):
        X, y, _ = _small_instance(seed=59)
        phi = FeatureOperator.identity(X)
        exps = Exponents.from_p(5 / 4)
        cfg = SolverConfig(gamma=3.0, exps=exps, tol=1e-15, max_iter=100_000)
        st = solve_dual_prox_grad(phi, y, SQUARE, cfg)
        wbar = recover_primal(phi, st.alpha, exps.q)
        f_star = primal_objective(phi, wbar, y, SQUARE, 3.0, exps)
        fi = primal_fista(phi, y, cfg, f_target=f_star, rel_precision=1e-13,
                          max_iter=400_000)
        assert fi.converged and lp_norm(fi.w - wbar, exps.p) <= 1e-6

    def test_ridge_scalar_example(self):
        phi = FeatureOperator.identity([[1.0]])
        w = ridge_closed_form(phi, [1.0], 1.0)
        np.testing.assert_allclose(w, [0.5])

    def test_ridge_zero_targets(self):
        phi = FeatureOperator.identity(np.random.default_rng(0).standard_normal((4, 3)))
        np.testing.assert_allclose(ridge_closed_form(phi, np.zeros(4), 2.0), np.zeros(3))

    def test_ridge_kkt(self):
        rng = np.random.default_rng(61)
        X = rng.standard_normal((6, 4))
        y = rng.standard_normal(6)
        phi = FeatureOperator.identity(X)
        w = ridge_closed_form(phi, y, 2.0)
        # primal optimality of the p=2 problem
        grad = 2.0 * phi.adjoint(phi.apply(w) - y) + w
        assert np.max(np.abs(grad)) <= 1e-10


class TestDiagnostics:
    def _diag(self, p, seed=67):
        X, y, _ = _small_instance(seed=seed)
        phi = FeatureOperator.identity(X)
        exps = Exponents.from_p(p)
        cfg = SolverConfig(gamma=2.0, exps=exps, tol=1e-14, max_iter=100_000,
                           record_alphas=True)
        st = solve_dual_prox_grad(phi, y, SQUARE, cfg)
        lam_star = min(st.history.objectives)
        return error_bound_diagnostic(st, phi, y, SQUARE, 2.0, exps,
                                      st.alpha, lam_star), st

    def test_envelope_dominates_suboptimality(self):
        X, y, _ = _small_instance(seed=71)
        g = build_gram(X, TensorKernelSpec("linear"))
        phi = FeatureOperator.identity(X)
        cfg = SolverConfig(gamma=2.0, exps=E4, tol=1e-13, max_iter=5000,
                           record_alphas=True)
        st = solve_dual_ls_q4(g, y, cfg)
        lam_star = min(st.history.objectives)
        rep = error_bound_diagnostic(st, phi, y, SQUARE, 2.0, E4, st.alpha, lam_star)
        assert rep.envelope is not None
        assert np.all(rep.dual_subopt <= rep.envelope + 1e-8)

    def test_c_hat_positive(self):
        rep, _ = self._diag(4 / 3)
        assert rep.c_hat > 0

    def test_c_hat_shrinks_toward_p1(self):
        rep_43, _ = self._diag(4 / 3)
        rep_105, _ = self._diag(1.05)
        assert rep_105.c_hat < rep_43.c_hat

    def test_dual_to_primal_continuity(self):
        rep, st = self._diag(4 / 3)
        rel = rep.dual_subopt / max(1.0, abs(min(st.history.objectives)))
        deep = rel <= 1e-10
        assert np.any(deep)
        assert rep.primal_err_p[deep][-1] <= 1e-4

    def test_zero_data_trivial(self):
        phi = FeatureOperator.identity(np.zeros((3, 2)))
        cfg = SolverConfig(gamma=1.0, exps=E4, tol=1e-12, record_alphas=True)
        st = solve_dual_prox_grad(phi, np.zeros(3), SQUARE, cfg)
        rep = error_bound_diagnostic(st, phi, np.zeros(3), SQUARE, 1.0, E4,
                                     st.alpha, st.objective)
        assert np.all(rep.dual_subopt == 0) and np.all(rep.primal_err_p == 0)
        assert rep.c_hat == 0.0

    def test_requires_recorded_alphas(self):
        X, y, _ = _small_instance()
        phi = FeatureOperator.identity(X)
        st = solve_dual_prox_grad(phi, y, SQUARE, SolverConfig(gamma=1.0, exps=E4))
        with pytest.raises(ValueError):
            error_bound_diagnostic(st, phi, y, SQUARE, 1.0, E4, st.alpha, st.objective)


class TestTraces:
    def test_trace_csv_roundtrip(self, tmp_path):
        X, y, _ = _small_instance()
        phi = FeatureOperator.identity(X)
        st = solve_dual_prox_grad(phi, y, SQUARE, SolverConfig(gamma=1.0, exps=E4, tol=1e-10))
        path = tmp_path / "trace.csv"
        write_trace_csv(st.history, path, header={"gamma": 1.0, "p": "4/3"})
        lines = path.read_text().splitlines()
        assert lines[0] == "# gamma=1.0"
        assert lines[2].split(",")[0] == "iter"
        rows = [l.split(",") for l in lines[3:]]
        assert len(rows) == len(st.history.iters)
        objs = np.array([float(r[2]) for r in rows])
        assert np.all(np.diff(objs) <= 1e-10 * (1 + np.abs(objs[:-1])))

    def test_iterations_to_precision(self):
        objs = [10.0, 1.0, 0.1, 1e-9, 1e-12]
        assert iterations_to_precision(objs, 0.0, 1e-8) == 3
        assert iterations_to_precision([1.0], 0.0, 1e-8) is None
