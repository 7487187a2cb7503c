import numpy as np
import pytest

from conftest import make_toy_dataset, tight_toy_config

from fxam.model import (
    FxamModel,
    ShapeCurve,
    TemporalCurves,
    deserialize,
    evaluate_shape,
    export_contributions,
    predict,
    predict_batch,
    serialize,
)
from fxam.training import tsi_train


def small_model():
    return FxamModel(
        intercept=1.0,
        shapes={"x": ShapeCurve(np.array([0.0, 1.0]), np.array([0.0, 2.0]))},
        betas={"z=a": 1.5, "z=b": -0.5},
        temporals={},
        schema={"numerical": ["x"], "categorical": ["z"], "temporal": []},
    )


@pytest.fixture(scope="module")
def trained():
    dataset = make_toy_dataset(0)
    model = tsi_train(dataset, tight_toy_config())
    return dataset, model


class TestShapeCurve:
    def test_exact_at_knots(self):
        curve = ShapeCurve(np.array([0.0, 2.0, 5.0]),
                           np.array([1.0, -1.0, 4.0]))
        assert evaluate_shape(curve, 2.0) == -1.0

    def test_midpoint_interpolates(self):
        curve = ShapeCurve(np.array([0.0, 1.0]), np.array([2.0, 4.0]))
        assert evaluate_shape(curve, 0.5) == 3.0

    def test_clamped_outside_range(self):
        curve = ShapeCurve(np.array([0.0, 1.0]), np.array([2.0, 4.0]))
        assert evaluate_shape(curve, -10.0) == 2.0
        assert evaluate_shape(curve, 10.0) == 4.0

    def test_empty_curve_rejected_at_eval(self):
        curve = ShapeCurve(np.array([]), np.array([]))
        with pytest.raises(ValueError, match="empty"):
            evaluate_shape(curve, 0.0)

    def test_non_increasing_knots_rejected(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            ShapeCurve(np.array([0.0, 0.0]), np.array([1.0, 2.0]))


class TestPredict:
    def test_interpolated_contribution(self):
        model = small_model()
        assert predict(model, {"x": 0.5, "z": "a"}) == pytest.approx(
            1.0 + 1.0 + 1.5
        )

    def test_unseen_category_contributes_zero(self):
        model = small_model()
        seen = predict(model, {"x": 0.5, "z": "a"})
        unseen = predict(model, {"x": 0.5, "z": "mystery"})
        assert unseen == pytest.approx(seen - 1.5)

    def test_missing_column_rejected(self):
        with pytest.raises(ValueError, match="missing required column"):
            predict(small_model(), {"x": 0.5})

    def test_non_finite_numeric_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            predict(small_model(), {"x": np.nan, "z": "a"})

    def test_training_records_match_stored_fit(self, trained):
        dataset, model = trained
        columns = {}
        for mapping in (dataset.numerical, dataset.categorical,
                        dataset.temporal):
            columns.update(mapping)
        batch = predict_batch(model, columns)
        # row-by-row predict agrees with the vectorized path
        for i in (0, 7, 150):
            record = {name: columns[name][i] for name in columns}
            assert predict(model, record) == pytest.approx(batch[i])

    def test_temporal_divisibility_enforced(self):
        curves = TemporalCurves(
            tau=2, period=2,
            trend=ShapeCurve(np.array([0.0, 2.0]), np.array([1.0, 1.0])),
            seasonal_phases=(
                ShapeCurve(np.array([0.0]), np.array([0.5])),
                ShapeCurve(np.array([2.0]), np.array([-0.5])),
            ),
        )
        model = FxamModel(
            intercept=0.0, shapes={}, betas={}, temporals={"t": curves},
            schema={"numerical": [], "categorical": [], "temporal": ["t"]},
        )
        assert predict(model, {"t": 2}) == pytest.approx(1.0 - 0.5)
        with pytest.raises(ValueError, match="divisible"):
            predict(model, {"t": 3})


class TestSerialization:
    def test_round_trip_is_bit_faithful(self, trained):
        dataset, model = trained
        clone = deserialize(serialize(model))
        assert clone.intercept == model.intercept
        for name, curve in model.shapes.items():
            np.testing.assert_array_equal(clone.shapes[name].knots,
                                          curve.knots)
            np.testing.assert_array_equal(clone.shapes[name].values,
                                          curve.values)
        assert clone.betas == model.betas
        for name, tc in model.temporals.items():
            other = clone.temporals[name]
            np.testing.assert_array_equal(other.trend.values,
                                          tc.trend.values)
            for a, b in zip(other.seasonal_phases, tc.seasonal_phases):
                np.testing.assert_array_equal(a.values, b.values)

    def test_round_trip_predicts_identically(self, trained):
        dataset, model = trained
        clone = deserialize(serialize(model))
        columns = {}
        for mapping in (dataset.numerical, dataset.categorical,
                        dataset.temporal):
            columns.update(mapping)
        np.testing.assert_array_equal(
            predict_batch(clone, columns), predict_batch(model, columns)
        )

    def test_empty_categorical_model_round_trips(self):
        model = FxamModel(
            intercept=2.0,
            shapes={"x": ShapeCurve(np.array([0.0, 1.0]),
                                    np.array([1.0, -1.0]))},
            betas={},
            temporals={},
            schema={"numerical": ["x"], "categorical": [], "temporal": []},
        )
        clone = deserialize(serialize(model))
        assert clone.betas == {}
        assert clone.intercept == 2.0

    def test_version_mismatch_rejected(self, trained):
        _, model = trained
        payload = serialize(model).replace(
            b"fxam-model/1", b"fxam-model/999"
        )
        with pytest.raises(ValueError, match="version"):
            deserialize(payload)

    def test_malformed_payload_rejected(self):
        with pytest.raises(ValueError, match="malformed"):
            deserialize(b"{not json")


class TestExportContributions:
    def test_categorical_rows(self):
        rows = export_contributions(small_model())
        cat = [r for r in rows if r["component"] == "categorical"]
        assert {(r["feature"], r["x"], r["value"]) for r in cat} == {
            ("z", "a", 1.5), ("z", "b", -0.5),
        }

    def test_shape_rows_match_curve(self):
        rows = export_contributions(small_model())
        shape = [r for r in rows if r["component"] == "shape"]
        assert [(r["x"], r["value"]) for r in shape] == [
            (0.0, 0.0), (1.0, 2.0),
        ]

    def test_trained_export_reproduces_components(self, trained):
        dataset, model = trained
        rows = export_contributions(model)
        by_kind = {}
        for row in rows:
            by_kind.setdefault(row["component"], []).append(row)
        assert set(by_kind) == {"shape", "categorical", "trend", "seasonal"}
        # seasonal rows reproduce the stored phase curves
        tc = model.temporals["t"]
        for row in by_kind["seasonal"]:
            curve = tc.seasonal_phases[row["phase"]]
            at = np.flatnonzero(curve.knots == row["x"])[0]
            assert row["value"] == pytest.approx(float(curve.values[at]))

    def test_noiseless_slope_recovered(self):
        # linear truth: the exported curve's interior secants are the slope
        from fxam.data import Dataset

        rng = np.random.default_rng(0)
        x = np.cumsum(rng.uniform(0.5, 1.5, 300))
        rng.shuffle(x)
        y = 2.0 * x
        ds = Dataset(response=y, numerical={"x": x})
        model = tsi_train(ds, tight_toy_config(temporal_rules={}))
        curve = model.shapes["x"]
        slopes = np.diff(curve.values) / np.diff(curve.knots)
        np.testing.assert_allclose(slopes, 2.0, atol=1e-6)
