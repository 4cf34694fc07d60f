import numpy as np
import pytest

from edgepipe.bounds import BoundConstants, noise_floor
from edgepipe.data import Dataset, SyntheticSpec, synthesize
from edgepipe.errors import ConfigurationError
from edgepipe.learner import (
    LossSpec,
    estimate_noise_constants,
    estimate_smoothness_constants,
    solve_erm,
    subset_loss,
)
from edgepipe.schedule import ProtocolConfig, compute_schedule
from edgepipe.simulator import (
    average_runs,
    derive_run_streams,
    experimental_optimum,
    gaussian_init,
    offload_then_train,
    run_pipeline,
)


def cfg(N, n_c, n_o, T, tau_p=1, alpha=0.01):
    return ProtocolConfig(N=N, n_c=n_c, n_o=n_o, tau_p=tau_p, T=T, alpha=alpha)


@pytest.fixture(scope="module")
def small():
    ds, _ = synthesize(SyntheticSpec(N=300, d=3, noise=0.5), seed=10)
    return ds, LossSpec(0.1, 300)


class TestRunPipeline:
    def test_transmission_log_partitions_dataset(self, small):
        ds, spec = small
        c = cfg(300, 70, 10, T=700)
        _, log = run_pipeline(ds, c, spec, np.zeros(3), seed=1)
        sched = compute_schedule(c)
        assert len(log.blocks) == sched.B_d
        sizes = [len(b) for b in log.blocks]
        assert sizes == [70, 70, 70, 70, 20]
        assert log.cumulative == list(np.cumsum(sizes))
        merged = np.sort(np.concatenate(log.blocks))
        assert np.array_equal(merged, np.arange(300))

    def test_bit_identical_replay(self, small):
        ds, spec = small
        c = cfg(300, 70, 10, T=1000)
        w0 = gaussian_init(3, 4)
        a, _ = run_pipeline(ds, c, spec, w0, seed=(4, 0))
        b, _ = run_pipeline(ds, c, spec, w0, seed=(4, 0))
        assert np.array_equal(a.losses, b.losses)
        assert np.array_equal(a.final_w, b.final_w)

    def test_trace_length_matches_schedule(self, small):
        ds, spec = small
        c = cfg(300, 70, 10, T=1000)
        sched = compute_schedule(c)
        trace, _ = run_pipeline(ds, c, spec, np.zeros(3), seed=2)
        assert len(trace.times) == (sched.B - 1) * sched.n_p + sched.n_l
        assert len(trace.block_end_w) == sched.B
        assert trace.times[-1] <= c.T + 1e-9

    def test_record_every_keeps_endpoint(self, small):
        ds, spec = small
        c = cfg(300, 70, 10, T=1000)
        full, _ = run_pipeline(ds, c, spec, np.zeros(3), seed=3)
        thin, _ = run_pipeline(ds, c, spec, np.zeros(3), seed=3, record_every=7)
        assert thin.times[-1] == full.times[-1]
        assert thin.losses[-1] == full.losses[-1]
        assert set(thin.times).issubset(set(full.times))

    def test_no_peeking_with_debug_checks(self, small):
        ds, spec = small
        c = cfg(300, 70, 10, T=1000)
        run_pipeline(ds, c, spec, np.zeros(3), seed=5, debug_checks=True)

    def test_rejects_wrong_dataset_size(self, small):
        ds, spec = small
        with pytest.raises(ConfigurationError):
            run_pipeline(ds, cfg(299, 70, 10, T=1000), spec, np.zeros(3), seed=0)

    def test_rejects_schedule_with_no_updates(self, small):
        ds, spec = small
        c = cfg(300, 300, 0, T=300.5, tau_p=400)
        with pytest.raises(ConfigurationError, match="no training"):
            run_pipeline(ds, c, spec, np.zeros(3), seed=0)

    def test_identical_samples_give_monotone_loss(self):
        # every sample equal: the stochastic gradient is the exact gradient,
        # so each update with alpha <= 1/L is a descent step
        x = np.array([1.5, -0.5])
        ds = Dataset(np.tile(x, (100, 1)), np.full(100, 2.0))
        spec = LossSpec(0.0, 100)
        L = 2 * float(x @ x)
        c = cfg(100, 20, 0, T=200, alpha=1.0 / L)
        trace, _ = run_pipeline(ds, c, spec, np.array([3.0, -1.0]), seed=8)
        assert np.all(np.diff(trace.losses) <= 1e-15)


class TestOffloadThenTrain:
    def test_matches_single_block_pipeline_exactly(self, small):
        ds, spec = small
        c = cfg(300, 300, 10, T=1000)
        w0 = gaussian_init(3, 11)
        a, _ = run_pipeline(ds, c, spec, w0, seed=(11, 0))
        b = offload_then_train(ds, c.with_block_size(77), spec, w0, seed=(11, 0))
        assert np.array_equal(a.final_w, b.final_w)
        assert np.array_equal(a.losses, b.losses)
        assert np.array_equal(a.times, b.times)

    def test_rejects_budget_below_delivery_time(self, small):
        ds, spec = small
        with pytest.raises(ConfigurationError):
            offload_then_train(ds, cfg(300, 100, 10, T=305), spec, np.zeros(3), seed=0)


class TestAverageRuns:
    def test_single_seed_mean_is_the_run(self, small):
        ds, spec = small
        c = cfg(300, 70, 10, T=700)
        avg = average_runs(ds, c, spec, "gaussian", [42])
        run_seq, _ = derive_run_streams(42)
        trace, _ = run_pipeline(ds, c, spec, gaussian_init(3, 42), run_seq)
        assert np.array_equal(avg.mean_losses, trace.losses)
        assert np.all(avg.stderr == 0)

    def test_mean_of_two_runs(self, small):
        ds, spec = small
        c = cfg(300, 70, 10, T=700)
        avg = average_runs(ds, c, spec, "gaussian", [1, 2])
        singles = [average_runs(ds, c, spec, "gaussian", [s]) for s in (1, 2)]
        expected = (singles[0].mean_losses + singles[1].mean_losses) / 2
        assert np.allclose(avg.mean_losses, expected, rtol=0, atol=0)
        assert avg.n_runs == 2 and len(avg.per_run_final) == 2

    def test_explicit_init_list(self, small):
        ds, spec = small
        c = cfg(300, 70, 10, T=700)
        w0s = [np.zeros(3), np.ones(3)]
        avg = average_runs(ds, c, spec, w0s, [1, 2])
        assert avg.n_runs == 2
        with pytest.raises(ConfigurationError):
            average_runs(ds, c, spec, w0s, [1, 2, 3])

    def test_requires_a_seed(self, small):
        ds, spec = small
        with pytest.raises(ConfigurationError):
            average_runs(ds, cfg(300, 70, 10, T=700), spec, "gaussian", [])


class TestExperimentalOptimum:
    def test_table_covers_sorted_grid(self, small):
        ds, spec = small
        best, table = experimental_optimum(ds, cfg(300, 70, 10, T=700), spec, [150, 50, 300], [1, 2])
        assert [row[0] for row in table] == [50, 150, 300]
        assert best in {50, 150, 300}
        assert best == min(table, key=lambda r: (r[1], r[0]))[0]

    def test_deterministic(self, small):
        ds, spec = small
        a = experimental_optimum(ds, cfg(300, 70, 10, T=700), spec, [50, 150], [3, 4])
        b = experimental_optimum(ds, cfg(300, 70, 10, T=700), spec, [50, 150], [3, 4])
        assert a == b


class TestLongRunGapSanity:
    def test_gap_settles_near_noise_floor(self):
        # no overhead and a long residual phase: the measured gap should be
        # within a few multiples of the predicted noise floor
        N, d = 400, 3
        ds, _ = synthesize(SyntheticSpec(N=N, d=d, noise=0.3), seed=20)
        spec = LossSpec(0.1, N)
        alpha = 0.005
        c = cfg(N, 100, 0, T=8 * N, alpha=alpha)
        L, cc = estimate_smoothness_constants(ds, spec)
        rng = np.random.default_rng(21)
        probes = [rng.standard_normal(d) for _ in range(6)]
        M = estimate_noise_constants(ds, spec, probes).M
        k = BoundConstants.create(L=L, c=cc, M=M, D=1.0, alpha=alpha)
        w_star, loss_star = solve_erm(ds, spec)
        gaps = []
        for s in range(10):
            run_seq, _ = derive_run_streams(s)
            trace, _ = run_pipeline(ds, c, spec, gaussian_init(d, s), run_seq, record_every=50)
            gaps.append(subset_loss(trace.final_w, ds, spec) - loss_star)
        assert np.mean(gaps) <= 3 * noise_floor(k)
