import numpy as np
import pytest

from diffadapt import config as cf
from diffadapt import diffusion as df
from diffadapt import experiment as ex
from diffadapt import features as ft
from diffadapt import filters as fl
from diffadapt import topology as tp
from oracles import gaussian_kernel_vector, loop_lms_network

NET = tp.generate_random_connected(6, 0.4, seed=3)
A = tp.max_degree_weights(NET)
RHO = tp.uniform_task_weights(NET)


def stream(n, T, m=3, seed=0):
    rng = np.random.default_rng(seed)
    U = rng.normal(size=(T, n, m))
    D = np.sin(U[..., 0]) + U[..., 1] * U[..., 2] + 0.1 * rng.normal(size=(T, n))
    return U, D


def step_sizes(n, seed=1):
    return np.random.default_rng(seed).uniform(0.01, 0.08, n)


class TestATC:
    def test_identity_mixing_is_noncooperative(self):
        U, D = stream(6, 100)
        mu = step_sizes(6)
        filt = fl.KLMS(ft.GaussianKernel(1 / 3), ft.build_dictionary(20, 3, 0))
        a = df.simulate(filt, df.Protocol("atc", mixing=tp.identity_mixing(6)), U, D, mu)
        b = df.simulate(filt, df.Protocol("non_cooperative"), U, D, mu)
        np.testing.assert_array_equal(a.prior_error, b.prior_error)
        np.testing.assert_array_equal(a.final_params, b.final_params)

    def test_single_agent_is_standalone(self):
        U, D = stream(1, 50)
        filt = fl.LMS(3)
        res = df.simulate(filt, df.Protocol("atc", mixing=tp.identity_mixing(1)), U, D, [0.05])
        w = np.zeros((1, 3))
        for t in range(50):
            assert res.prior_error[0, t] == D[t, 0] - filt.predict(w, U[t])[0]
            w = filt.adapt(w, U[t], D[t], [0.05])
        np.testing.assert_array_equal(res.final_params, w)

    def test_symmetry_on_regular_graph(self):
        ring = tp.Network(5, [(k, (k + 1) % 5) for k in range(5)])
        mix = tp.max_degree_weights(ring)
        filt = fl.LMS(3)
        params = np.tile([0.2, -0.1, 0.4], (5, 1))
        u = np.tile([1.0, 0.5, -2.0], (5, 1))
        new = df.run_slot_atc(filt, params, mix, u, np.full(5, 0.7), np.full(5, 0.05))
        assert np.all(new == new[0])

    def test_symmetry_general_graph(self):
        filt = fl.LMS(3)
        params = np.tile([0.2, -0.1, 0.4], (6, 1))
        u = np.tile([1.0, 0.5, -2.0], (6, 1))
        new = df.run_slot_atc(filt, params, A, u, np.full(6, 0.7), np.full(6, 0.05))
        np.testing.assert_allclose(new, np.broadcast_to(new[0], new.shape), rtol=1e-15, atol=0)

    def test_matches_loop_oracle_on_kernel_features(self):
        net = tp.generate_random_connected(5, 0.5, seed=8)
        mix = tp.max_degree_weights(net)
        U, D = stream(5, 200, seed=4)
        mu = step_sizes(5)
        dic = ft.build_dictionary(30, 3, seed=2)
        filt = fl.KLMS(ft.GaussianKernel(1 / 3), dic)
        res = df.simulate(filt, df.Protocol("atc", mixing=mix), U, D, mu)
        X = np.array([[gaussian_kernel_vector(dic.atoms, U[t, k], 1 / 3) for k in range(5)] for t in range(200)])
        ref = loop_lms_network(mix.a, X, D, mu, "atc")
        assert np.max(np.abs(res.prior_error - ref)) <= 1e-14

    def test_rejects_wrong_agent_count(self):
        with pytest.raises(ValueError):
            df.run_slot_atc(fl.LMS(3), np.zeros((4, 3)), A, np.zeros((4, 3)), np.zeros(4), np.zeros(4))

    def test_convex_hull(self):
        rng = np.random.default_rng(5)
        filt = fl.LMS(3)
        for _ in range(50):
            params = rng.normal(size=(6, 3))
            phi = filt.adapt(params, rng.normal(size=(6, 3)), rng.normal(size=6), step_sizes(6))
            new = df.combine(A, phi)
            for k in range(6):
                nb = phi[A.a[:, k] > 0]
                tol = 1e-14 * np.abs(nb).max()
                assert np.all(new[k] >= nb.min(axis=0) - tol) and np.all(new[k] <= nb.max(axis=0) + tol)

    def test_slot_synchrony_under_agent_permutation(self):
        rng = np.random.default_rng(6)
        filt = fl.KLMS(ft.GaussianKernel(1 / 3), ft.build_dictionary(10, 3, 0))
        params = rng.normal(size=(6, 10))
        u, d, mu = rng.normal(size=(6, 3)), rng.normal(size=6), step_sizes(6)
        vectorised = df.run_slot_atc(filt, params, A, u, d, mu)
        for order in (rng.permutation(6), np.arange(6)[::-1]):
            phi = np.empty_like(params)
            for k in order:
                phi[k] = filt.adapt(params[k:k + 1], u[k:k + 1], d[k:k + 1], mu[k:k + 1])[0]
            assembled = np.empty_like(params)
            for k in rng.permutation(6):
                assembled[k] = df.combine(A.a[:, k:k + 1], phi)[0]
            np.testing.assert_array_equal(assembled, vectorised)


class TestMultitask:
    def test_eta_zero_is_noncooperative(self):
        U, D = stream(6, 100)
        mu = step_sizes(6)
        filt = fl.KLMS(ft.GaussianKernel(1 / 3), ft.build_dictionary(20, 3, 0))
        a = df.simulate(filt, df.Protocol("multitask", task_weights=RHO, eta=0.0), U, D, mu)
        b = df.simulate(filt, df.Protocol("non_cooperative"), U, D, mu)
        np.testing.assert_array_equal(a.prior_error, b.prior_error)
        np.testing.assert_array_equal(a.final_params, b.final_params)

    def test_consensus_adds_no_penalty(self):
        params = np.tile([0.3, -0.2, 0.1], (6, 1))
        u, d, mu = np.random.default_rng(0).normal(size=(6, 3)), np.ones(6), step_sizes(6)
        filt = fl.LMS(3)
        np.testing.assert_array_equal(
            df.run_slot_multitask(filt, params, RHO, 0.5, u, d, mu), filt.adapt(params, u, d, mu)
        )

    def test_two_agent_hand_calculation(self):
        rho = tp.TaskWeights([[0.0, 1.0], [1.0, 0.0]])
        params = np.array([[1.0, 0.0], [0.0, 1.0]])
        u = np.array([[1.0, 0.0], [0.0, 1.0]])
        new = df.run_slot_multitask(fl.LMS(2), params, rho, 0.01, u, np.array([2.0, 0.0]), np.array([0.1, 0.1]))
        np.testing.assert_allclose(new, [[1.099, 0.001], [0.001, 0.899]], atol=1e-14, rtol=0)

    def test_vectorised_penalty_matches_per_agent(self):
        rng = np.random.default_rng(7)
        params = rng.normal(size=(6, 4))
        g = df.penalty_gradients(params, RHO, 0.3)
        for k in range(6):
            others = [l for l in range(6) if l != k]
            ref = fl.multitask_penalty_gradient(
                params[k], params[others], RHO.rho[k, others], 0.3, RHO.rho[others, k]
            )
            np.testing.assert_allclose(g[k], ref, atol=1e-15)

    def test_matches_loop_oracle(self):
        U, D = stream(6, 60, seed=9)
        mu = step_sizes(6)
        res = df.simulate(fl.LMS(3), df.Protocol("multitask", task_weights=RHO, eta=0.2), U, D, mu)
        ref = loop_lms_network(None, U, D, mu, "multitask", rho=RHO.rho.tolist(), eta=0.2)
        np.testing.assert_allclose(res.prior_error, ref, atol=1e-12)

    def test_large_eta_shrinks_dispersion(self):
        net = tp.generate_random_connected(9, 0.3, seed=1)
        rho = tp.uniform_task_weights(net)
        rng = np.random.default_rng(2)
        w_true = np.array([0.5, -1.0, 0.8])
        filt = fl.LMS(3)
        mu = np.full(9, 0.02)

        def dispersion_trace(eta):
            params = rng.normal(scale=2.0, size=(9, 3))
            local = np.random.default_rng(3)
            out = []
            for _ in range(400):
                u = local.normal(size=(9, 3))
                d = u @ w_true + 0.1 * local.normal(size=9)
                params = df.run_slot_multitask(filt, params, rho, eta, u, d, mu)
                diff = params[:, None] - params[None]
                out.append(np.sqrt((diff**2).sum(-1)).max())
            return np.array(out)

        strong = dispersion_trace(20.0)
        assert strong[100:250].mean() >= strong[250:].mean()
        assert strong[50:].mean() < dispersion_trace(0.0)[50:].mean()


class TestCTASAF:
    def test_identity_mixing_is_standalone(self):
        U, D = stream(6, 100)
        mu = step_sizes(6)
        saf = fl.SAF(3)
        a = df.simulate(saf, df.Protocol("cta_saf", mixing=tp.identity_mixing(6)), U, D, mu)
        b = df.simulate(saf, df.Protocol("non_cooperative"), U, D, mu)
        np.testing.assert_array_equal(a.prior_error, b.prior_error)
        np.testing.assert_array_equal(a.final_params, b.final_params)

    def test_identity_spline_frozen_matches_cta_lms(self):
        saf = fl.SAF(3, x_min=-40.0, delta_x=0.25, n_points=321, q_step=0.0)
        rng = np.random.default_rng(10)
        U = rng.normal(size=(300, 6, 3))
        D = U @ np.array([0.6, -0.9, 0.3]) + 0.1 * rng.normal(size=(300, 6))
        mu = step_sizes(6)
        res = df.simulate(saf, df.Protocol("cta_saf", mixing=A), U, D, mu)
        ref = loop_lms_network(A.a, U, D, mu, "cta")
        assert np.max(np.abs(res.prior_error - ref)) <= 1e-12

    def test_message_accounting(self):
        U, D = stream(6, 25)
        res = df.simulate(fl.SAF(3), df.Protocol("cta_saf", mixing=A), U, D, step_sizes(6))
        links = 2 * len(NET.edges)
        assert res.traffic.messages == 25 * links
        assert res.traffic.indices == 25 * links
        assert res.traffic.reals == 4 * 25 * links

    def test_span_combination_uses_own_index(self):
        saf = fl.SAF(3)
        rng = np.random.default_rng(11)
        params = saf.init_params(6)
        params[:, :3] = rng.normal(scale=0.3, size=(6, 3))
        params[:, 3:] += rng.normal(scale=0.05, size=(6, saf.n_points))
        u, d, mu = rng.normal(size=(6, 3)), rng.normal(size=6), step_sizes(6)
        new = df.run_slot_cta_saf(saf, params, A, u, d, mu)
        w, q = saf.split(params)
        for k in range(6):
            psi = sum(A.a[l, k] * w[l] for l in range(6))
            i, t = saf.span(float(np.sum(psi * u[k])))
            xi = sum(A.a[l, k] * q[l, i:i + 4] for l in range(6))
            ref = saf.step(psi[None], q[k:k + 1], np.array([i]), np.array([t]), xi[None], u[k:k + 1], d[k:k + 1], mu[k:k + 1])
            np.testing.assert_allclose(new[k], ref[0], atol=1e-14)
            # convex hull of the contributing neighbours
            nb = A.a[:, k] > 0
            assert np.all(psi >= w[nb].min(0) - 1e-14) and np.all(psi <= w[nb].max(0) + 1e-14)

    def test_requires_saf(self):
        with pytest.raises(TypeError):
            df.run_slot_cta_saf(fl.LMS(3), np.zeros((6, 3)), A, np.zeros((6, 3)), np.zeros(6), np.zeros(6))


def test_protocol_validation():
    with pytest.raises(ValueError):
        df.Protocol("gossip")
    with pytest.raises(ValueError):
        df.Protocol("atc")
    with pytest.raises(ValueError):
        df.Protocol("multitask", task_weights=RHO, eta=-1.0)


def test_divergence_is_reported():
    U, D = stream(2, 200)
    with pytest.raises(FloatingPointError), np.errstate(over="ignore", invalid="ignore"):
        df.simulate(fl.LMS(3), df.Protocol("non_cooperative"), 100 * U, D, [5.0, 5.0])


def small_config(**kw):
    base = dict(slots=80, runs=4, steady_window=10, n_agents=5, edge_probability=0.5, dictionary_sizes=(20,), per_agent_traces=())
    base.update(kw)
    return cf.preset("fig5").replace(**base)


class TestExperiment:
    def test_single_run_is_own_average(self):
        cfg = small_config(runs=1)
        res = ex.run_experiment(cfg)
        single = ex.run_single(cfg, 0)
        for label, r in res.results.items():
            np.testing.assert_array_equal(r.mean_mse, single[label][0].mean(axis=0))
            np.testing.assert_array_equal(r.std_mse, 0.0)

    def test_deterministic(self):
        cfg = small_config()
        a, b = ex.run_experiment(cfg), ex.run_experiment(cfg)
        for label in a.results:
            np.testing.assert_array_equal(a.results[label].mean_mse, b.results[label].mean_mse)
            np.testing.assert_array_equal(a.results[label].std_mse, b.results[label].std_mse)

    def test_parallel_equals_serial(self):
        cfg = small_config(runs=3)
        a, b = ex.run_experiment(cfg, 1), ex.run_experiment(cfg, 2)
        for label in a.results:
            np.testing.assert_array_equal(a.results[label].mean_mse, b.results[label].mean_mse)
            np.testing.assert_array_equal(a.results[label].agent_mse, b.results[label].agent_mse)

    def test_doubling_runs_is_consistent(self):
        cfg = small_config(runs=10, algorithms=("D-LMS", "D-MT-KLMS"))
        ten, twenty = ex.run_experiment(cfg), ex.run_experiment(cfg.replace(runs=20))
        for label in ten.results:
            r10 = ten.results[label]
            stderr = r10.std_mse / np.sqrt(10)
            assert np.all(np.abs(twenty.results[label].mean_mse - r10.mean_mse) <= 3 * stderr + 1e-12)

    def test_fixed_assignments_shared_across_runs(self):
        cfg = small_config()
        s1, s2 = ex.build_setup(cfg), ex.build_setup(cfg)
        assert s1.network == s2.network
        np.testing.assert_array_equal(s1.step_sizes, s2.step_sizes)
        np.testing.assert_array_equal(s1.dictionaries[20].atoms, s2.dictionaries[20].atoms)
