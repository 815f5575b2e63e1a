import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpirt import (
    BeliefGrid,
    IRFTable,
    ResponseMatrix,
    ThetaGrid,
    binary_entropy,
    marginal_prob,
    mutual_information,
    replay_experiment,
    run_cat,
    select_item,
    update_belief,
)
from gpirt.errors import CatOracleError, DegenerateBeliefError, InvalidArgumentError

GRID = ThetaGrid(-2.0, 2.0, 1.0)  # points -2, -1, 0, 1, 2


def two_point_belief():
    lm = np.full(len(GRID), -np.inf)
    lm[[1, 3]] = 0.0
    return BeliefGrid(GRID, lm)


@pytest.fixture
def bank():
    grid = ThetaGrid()
    x = grid.points
    probs = np.vstack(
        [
            np.full_like(x, 0.5),
            1 / (1 + np.exp(-0.3 * x)),
            1 / (1 + np.exp(-3.0 * x)),
            1 / (1 + np.exp(-3.0 * (x - 1.0))),
        ]
    )
    return IRFTable(grid, ("flat", "shallow", "steep", "steep_hi"), probs)


class TestBinaryEntropy:
    def test_values(self):
        assert binary_entropy(0.5) == pytest.approx(np.log(2))
        assert binary_entropy(0.0) == 0.0 and binary_entropy(1.0) == 0.0
        assert binary_entropy(0.25) == pytest.approx(0.25 * np.log(4) + 0.75 * np.log(4 / 3))
        assert binary_entropy(0.25) == pytest.approx(0.5623, abs=1e-4)

    @pytest.mark.parametrize("p", [-0.1, 1.1, np.nan])
    def test_out_of_range(self, p):
        with pytest.raises(InvalidArgumentError):
            binary_entropy(p)


class TestBelief:
    def test_prior_is_normalized(self):
        b = BeliefGrid.prior(ThetaGrid())
        assert b.mass.sum() == pytest.approx(1.0, abs=1e-12)
        assert b.mean() == pytest.approx(0.0, abs=1e-12)
        assert b.sd() == pytest.approx(1.0, abs=1e-4)

    def test_degenerate(self):
        with pytest.raises(DegenerateBeliefError):
            BeliefGrid(GRID, np.full(len(GRID), -np.inf))

    def test_mean_within_grid(self):
        b = BeliefGrid(GRID, np.array([0.0, -np.inf, -np.inf, -np.inf, -np.inf]))
        assert b.mean() == -2.0


class TestMarginalProb:
    def test_flat(self):
        assert marginal_prob(np.full(len(GRID), 0.5), BeliefGrid.prior(GRID)) == pytest.approx(0.5)

    def test_point_mass(self):
        row = np.linspace(0.1, 0.9, len(GRID))
        assert marginal_prob(row, BeliefGrid.point_mass(GRID, 1.0)) == pytest.approx(row[3])

    def test_two_point(self):
        row = np.array([0.1, 0.2, 0.5, 0.8, 0.9])
        assert marginal_prob(row, two_point_belief()) == pytest.approx(0.5)

    def test_grid_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            marginal_prob(np.full(3, 0.5), BeliefGrid.prior(GRID))


class TestMutualInformation:
    def test_flat_item(self):
        assert mutual_information(np.full(len(GRID), 0.5), BeliefGrid.prior(GRID)) == pytest.approx(0.0, abs=1e-12)

    def test_deterministic_item_reveals_two_point_belief(self):
        row = np.array([0.0, 0.0, 0.5, 1.0, 1.0])
        assert mutual_information(row, two_point_belief()) == pytest.approx(np.log(2), abs=1e-4)

    def test_point_mass_has_no_information(self, bank):
        b = BeliefGrid.point_mass(bank.grid, 0.3)
        for item in bank.items:
            assert mutual_information(bank.row(item), b) == pytest.approx(0.0, abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_bounds(self, seed):
        rng = np.random.default_rng(seed)
        b = BeliefGrid(GRID, rng.normal(0, 2, len(GRID)))
        row = rng.random(len(GRID))
        mi = mutual_information(row, b)
        p_star = marginal_prob(np.clip(row, 1e-6, 1 - 1e-6), b)
        assert 0.0 <= mi <= min(binary_entropy(p_star), b.entropy()) + 1e-12


class TestSelectAndUpdate:
    def test_single_item(self, bank):
        assert select_item(["shallow"], bank, BeliefGrid.prior(bank.grid)) == "shallow"

    def test_steep_beats_flat(self, bank):
        assert select_item(["flat", "shallow", "steep"], bank, BeliefGrid.prior(bank.grid)) == "steep"

    def test_ties_go_to_lowest_index(self, bank):
        same = IRFTable(bank.grid, ("a", "b", "c"), np.tile(bank.row("steep"), (3, 1)))
        assert select_item(["c", "b", "a"], same, BeliefGrid.prior(same.grid)) == "a"

    def test_empty(self, bank):
        with pytest.raises(InvalidArgumentError):
            select_item([], bank, BeliefGrid.prior(bank.grid))

    def test_flat_update_is_identity(self):
        b = BeliefGrid.prior(GRID)
        after = update_belief(b, np.full(len(GRID), 0.5), 1)
        np.testing.assert_allclose(after.mass, b.mass, atol=1e-15)

    def test_updates_commute(self, bank):
        b = BeliefGrid.prior(bank.grid)
        ab = update_belief(update_belief(b, bank.row("steep"), 1), bank.row("shallow"), -1)
        ba = update_belief(update_belief(b, bank.row("shallow"), -1), bank.row("steep"), 1)
        np.testing.assert_allclose(ab.mass, ba.mass, atol=1e-12)

    def test_deterministic_item_resolves_two_point_belief(self):
        after = update_belief(two_point_belief(), np.array([0.0, 0.0, 0.5, 1.0, 1.0]), 1)
        assert after.mass[3] == pytest.approx(1.0, abs=1e-5)

    def test_bad_response(self, bank):
        with pytest.raises(InvalidArgumentError):
            update_belief(BeliefGrid.prior(bank.grid), bank.row("flat"), 0)


class TestRunCat:
    def test_zero_items(self, bank):
        trace = run_cat(bank, lambda i: 1, max_items=0)
        assert len(trace) == 0
        np.testing.assert_allclose(trace.final_belief.mass, BeliefGrid.prior(bank.grid).mass)

    def test_full_inventory(self, bank):
        trace = run_cat(bank, lambda i: 1, max_items=len(bank.items))
        assert sorted(trace.administered) == sorted(bank.items)
        assert len(trace.responses) == len(trace.belief_snapshots) == len(trace.mi_values) == 4

    def test_sd_shrinks_on_deterministic_bank(self):
        grid = ThetaGrid()
        cuts = np.linspace(-2, 2, 9)
        probs = np.clip((grid.points[None, :] > cuts[:, None]).astype(float), 1e-6, 1 - 1e-6)
        table = IRFTable(grid, tuple(f"c{k}" for k in range(9)), probs)
        truth = 0.37
        trace = run_cat(table, lambda i: 1 if truth > cuts[table.index(i)] else -1, max_items=6)
        sds = [trace.initial_belief.sd()] + [b.sd() for b in trace.belief_snapshots]
        assert np.all(np.diff(sds) < 0)

    def test_sd_stopping_rule(self, bank):
        trace = run_cat(bank, lambda i: 1, sd_threshold=10.0)
        assert len(trace) == 0

    def test_point_mass_prior_never_moves(self, bank):
        prior = BeliefGrid.point_mass(bank.grid, 0.5)
        trace = run_cat(bank, lambda i: -1, max_items=3, prior=prior)
        assert len(trace) == 3
        for b in trace.belief_snapshots:
            np.testing.assert_array_equal(b.mass, prior.mass)

    def test_oracle_failure_keeps_partial_trace(self, bank):
        def oracle(item):
            if item != "steep":
                raise RuntimeError("respondent left")
            return 1

        with pytest.raises(CatOracleError) as err:
            run_cat(bank, oracle, max_items=4)
        assert err.value.trace.administered == ["steep"]


class TestReplay:
    @pytest.fixture
    def test_data(self, bank, rng):
        theta = rng.standard_normal(30)
        p = np.array([[np.interp(t, bank.grid.points, bank.row(i)) for i in bank.items] for t in theta])
        return ResponseMatrix.from_array(np.where(rng.random(p.shape) < p, 1, -1), items=bank.items)

    def test_full_battery_matches_reference(self, bank, test_data, rng):
        report = replay_experiment(bank, test_data, k=4, fixed_battery=list(bank.items), rng=rng)
        for name in ("CAT", "Fixed", "Random"):
            assert report.rmse[name] == pytest.approx(0.0, abs=1e-12)

    def test_report_table(self, bank, test_data, rng):
        report = replay_experiment(bank, test_data, k=2, fixed_battery=["flat", "shallow"], rng=rng)
        text = report.to_table()
        assert "RMSE" in text and "Improvement vs. random" in text
        assert report.rmse["CAT"] <= report.rmse["Fixed"]

    def test_missing_responses_are_skipped(self, bank, test_data, rng):
        cells = test_data.cells.copy()
        cells[0, 2] = 0
        report = replay_experiment(bank, test_data.with_cells(cells), k=4, rng=rng)
        assert any("unanswered" in n for n in report.notes)
