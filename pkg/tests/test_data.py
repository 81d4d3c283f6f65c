import io

import numpy as np
import pytest

from neyman import data
from neyman.errors import EmptyArm, ParseError
from neyman.montecarlo import run_trajectory, trajectory_rng
from neyman.designs import two_stage_config

CSV = """arm,impressions,clicks
treated,1000000,34176
control,2000000,0
treated,500000,20000
control,1000000,53618
"""


class TestIngest:
    def test_normalization(self):
        treated, control = data.ingest_csv(io.StringIO(CSV))
        assert treated.tolist() == [34176.0, 40000.0]
        assert control.tolist() == [0.0, 53618.0]

    def test_scale_consistency(self):
        doubled = CSV.replace("1000000,34176", "2000000,68352")
        treated, _ = data.ingest_csv(io.StringIO(doubled))
        assert treated.tolist() == [34176.0, 40000.0]

    def test_round_trip_is_idempotent(self, tmp_path):
        treated, control = data.ingest_csv(io.StringIO(CSV))
        obj = data.arrays_to_json_dict(treated, control)
        t2, c2 = data.arrays_from_json_dict(obj)
        assert t2.tolist() == treated.tolist()
        assert c2.tolist() == control.tolist()

    def test_clicks_above_impressions(self):
        bad = "arm,impressions,clicks\ntreated,100,101\ncontrol,100,1\n"
        with pytest.raises(ParseError) as err:
            data.ingest_csv(io.StringIO(bad))
        assert err.value.line == 2

    def test_bad_header(self):
        with pytest.raises(ParseError) as err:
            data.ingest_csv(io.StringIO("a,b,c\n"))
        assert err.value.line == 1

    def test_bad_arm_label(self):
        bad = "arm,impressions,clicks\nneither,100,1\n"
        with pytest.raises(ParseError):
            data.ingest_csv(io.StringIO(bad))

    def test_missing_arm(self):
        only_treated = "arm,impressions,clicks\ntreated,100,1\n"
        with pytest.raises(EmptyArm):
            data.ingest_csv(io.StringIO(only_treated))

    def test_path_input(self, tmp_path):
        path = tmp_path / "ab.csv"
        path.write_text(CSV)
        treated, _ = data.ingest_csv(path)
        assert len(treated) == 2

    def test_byte_stream_input(self):
        treated, control = data.ingest_csv(CSV.encode("utf-8"))
        assert treated.tolist() == [34176.0, 40000.0]
        assert control.tolist() == [0.0, 53618.0]


class TestSummarize:
    def test_hand_computed(self):
        stats = data.summarize(np.array([1.0, 2.0, 3.0]), np.array([5.0, 5.0]))
        assert stats.treated.mean == 2.0
        assert stats.treated.stdev == pytest.approx(1.0)
        assert stats.treated.min == 1.0
        assert stats.treated.median == 2.0
        assert stats.treated.max == 3.0
        assert stats.control.stdev == 0.0

    def test_even_length_median_is_midpoint(self):
        stats = data.summarize(np.array([1.0, 2.0, 3.0, 10.0]), np.array([1.0, 1.0]))
        assert stats.treated.median == 2.5

    def test_empty(self):
        with pytest.raises(EmptyArm):
            data.summarize(np.array([]), np.array([1.0]))


class TestSyntheticTable1:
    def test_exact_moment_match(self):
        for seed in (0, 1, 7):
            treated, control = data.synthetic_table1(40, seed)
            assert np.mean(treated) == pytest.approx(data.TABLE1_TREATED_MEAN, rel=1e-9)
            assert np.std(treated, ddof=1) == pytest.approx(data.TABLE1_TREATED_STD, rel=1e-9)
            assert np.mean(control) == pytest.approx(data.TABLE1_CONTROL_MEAN, rel=1e-9)
            assert np.std(control, ddof=1) == pytest.approx(data.TABLE1_CONTROL_STD, rel=1e-9)
            assert np.all(treated > 0) and np.all(control > 0)

    def test_effect_is_difference_of_published_means(self):
        treated, control = data.synthetic_table1(25, 3)
        tau = np.mean(treated) - np.mean(control)
        assert tau == pytest.approx(-19442.0, rel=1e-9)

    def test_summary_close_to_published(self):
        treated, control = data.synthetic_table1(40, 0)
        stats = data.summarize(treated, control)
        assert stats.treated.mean == pytest.approx(34176, rel=0.15)
        assert stats.treated.stdev == pytest.approx(12256, rel=0.15)
        assert stats.control.mean == pytest.approx(53618, rel=0.15)
        assert stats.control.stdev == pytest.approx(24850, rel=0.15)

    def test_deterministic(self):
        a1, c1 = data.synthetic_table1(40, 5)
        a2, c2 = data.synthetic_table1(40, 5)
        assert np.array_equal(a1, a2) and np.array_equal(c1, c2)


class TestBootstrapPopulation:
    def test_single_value_arrays_pin_the_estimate(self):
        pop = data.bootstrap_population([7.0], [3.0])
        result = run_trajectory(two_stage_config(16, 1.0), pop, 0, 0)
        assert result.tau_hat == pytest.approx(4.0)
        assert result.totals.total == 16

    def test_moments_are_plug_in(self, table1_pop):
        m = table1_pop.moments()
        assert m.sigma1 == pytest.approx(data.TABLE1_TREATED_STD, rel=1e-9)
        assert m.sigma0 == pytest.approx(data.TABLE1_CONTROL_STD, rel=1e-9)
        assert table1_pop.tau() == pytest.approx(-19442.0, rel=1e-9)

    def test_resample_mean_matches_source(self, table1_pop):
        rng = trajectory_rng(0, 0)
        y1, _ = table1_pop.sample(1_000_000, rng)
        se = data.TABLE1_TREATED_STD / 1000
        assert abs(np.mean(y1) - data.TABLE1_TREATED_MEAN) < 3 * se

    def test_empty_rejected(self):
        with pytest.raises(EmptyArm):
            data.bootstrap_population([], [1.0])
