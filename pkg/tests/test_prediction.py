import math

import numpy as np
import pytest

from spikelab.errors import DomainError
from spikelab.theory.measure import (
    AtomicMeasure,
    DensityMeasure,
    MarchenkoPasturMeasure,
    SemicircleMeasure,
)
from spikelab.theory.prediction import (
    Model,
    OverlapVariant,
    SpikeSpec,
    critical_threshold,
    predict,
    predict_additive,
    predict_additive_overlap,
    predict_in_gap,
    predict_multiplicative,
    predict_multiplicative_overlap,
    similarity_overlap,
)
from spikelab.theory.transforms import Side, Transform


def test_spike_spec_validation():
    spikes = SpikeSpec.of([0.5, -1.0, 2.0, 2.0])
    assert spikes.thetas == (2.0, 2.0, 0.5, -1.0)
    assert spikes.r == 4
    assert spikes.s == 3
    assert spikes.multiplicity(2.0) == 2
    for bad in [(), (1.0, 0.0), (1.0, 2.0), (math.inf,)]:
        with pytest.raises(DomainError):
            SpikeSpec(bad)


def test_model_transform():
    assert Model.ADDITIVE.transform == Transform.G
    assert Model.MULTIPLICATIVE.transform == Transform.T
    assert Model.SIMILARITY.transform == Transform.T


def test_additive_semicircle():
    prediction = predict_additive(SemicircleMeasure(1.0), SpikeSpec.of([2.0]))
    (outcome,) = prediction
    assert outcome.detectable
    assert outcome.limit == pytest.approx(2.5, rel=1e-12)
    assert outcome.overlap_sq == pytest.approx(0.75, rel=1e-12)
    assert prediction.model == Model.ADDITIVE


def test_additive_semicircle_subcritical():
    outcome = predict_additive(SemicircleMeasure(1.0), SpikeSpec((0.5,)))[0]
    assert not outcome.detectable
    assert outcome.limit == 2.0
    assert outcome.overlap_sq == 0.0


def test_additive_semicircle_exactly_critical():
    outcome = predict_additive(SemicircleMeasure(1.0), SpikeSpec((1.0,)))[0]
    assert not outcome.detectable
    assert outcome.limit == 2.0
    assert outcome.overlap_sq is None


def test_additive_negative_spike():
    prediction = predict_additive(
        SemicircleMeasure(1.0), SpikeSpec.of([-2.0, 3.0, -0.5])
    )
    assert [o.theta for o in prediction] == [3.0, -0.5, -2.0]
    assert prediction[0].limit == pytest.approx(3 + 1 / 3, rel=1e-12)
    assert prediction[1].limit == -2.0
    assert not prediction[1].detectable
    assert prediction[2].limit == pytest.approx(-2.5, rel=1e-12)
    assert prediction[2].overlap_sq == pytest.approx(0.75, rel=1e-12)


def test_repeated_spikes_share_an_outcome():
    prediction = predict_additive(SemicircleMeasure(1.0), SpikeSpec((2, 2)))
    assert len(prediction) == 2
    assert prediction[0] == prediction[1]
    assert prediction[0].multiplicity == 2


@pytest.mark.parametrize("theta", [0.7, -0.7, 5.0])
def test_additive_point_mass(theta):
    outcome = predict_additive(
        AtomicMeasure((1.5,), (1.0,)), SpikeSpec((theta,))
    )[0]
    assert outcome.detectable
    assert outcome.limit == pytest.approx(1.5 + theta, rel=1e-12)
    assert outcome.overlap_sq == pytest.approx(1.0, rel=1e-10)


def test_additive_overlap_through_quadrature():
    measure = DensityMeasure(
        -2.0,
        2.0,
        lambda t: np.sqrt(np.clip((2.0 - t) * (2.0 + t), 0.0, None))
        / (2 * math.pi),
        0.5,
        0.5,
    )
    assert predict_additive_overlap(measure, 2.0) == pytest.approx(
        0.75, rel=1e-8
    )


def test_multiplicative_marchenko_pastur():
    measure = MarchenkoPasturMeasure(0.25)
    raw = predict_multiplicative(measure, SpikeSpec((1.0,)))[0]
    assert raw.limit == pytest.approx(2.5, rel=1e-12)
    assert raw.overlap_sq == pytest.approx(3 / 7, rel=1e-10)
    similar = predict_multiplicative(
        measure, SpikeSpec((1.0,)), OverlapVariant.SIMILARITY
    )
    assert similar.model == Model.SIMILARITY
    assert similar[0].overlap_sq == pytest.approx(0.6, rel=1e-10)


def test_multiplicative_marchenko_pastur_subcritical():
    outcome = predict_multiplicative(
        MarchenkoPasturMeasure(0.25), SpikeSpec((0.3,))
    )[0]
    assert not outcome.detectable
    assert outcome.limit == pytest.approx(2.25)
    assert outcome.overlap_sq == 0.0


def test_multiplicative_negative_spike():
    # T^{-1}(w) = (1 + w)(1 + c w) / w for Marchenko-Pastur
    outcome = predict_multiplicative(
        MarchenkoPasturMeasure(0.25), SpikeSpec((-0.8,))
    )[0]
    assert outcome.detectable
    assert outcome.limit == pytest.approx(0.1375, rel=1e-10)
    assert 0.0 < outcome.overlap_sq < 1.0


def test_multiplicative_point_mass():
    measure = AtomicMeasure((1.0,), (1.0,))
    outcome = predict_multiplicative(measure, SpikeSpec((0.5,)))[0]
    assert outcome.limit == pytest.approx(1.5, rel=1e-12)
    assert outcome.overlap_sq == pytest.approx(1.0, rel=1e-10)


def test_multiplicative_preconditions():
    with pytest.raises(DomainError):
        predict_multiplicative(MarchenkoPasturMeasure(0.25), SpikeSpec((-1,)))
    with pytest.raises(DomainError):
        predict_multiplicative(SemicircleMeasure(), SpikeSpec((1.0,)))
    with pytest.raises(DomainError):
        predict_multiplicative_overlap(SemicircleMeasure(), 1.0)


def test_similarity_overlap_is_monotone_map():
    assert similarity_overlap(0.0, 1.0) == 0.0
    assert similarity_overlap(1.0, 3.0) == pytest.approx(1.0)
    assert similarity_overlap(3 / 7, 1.0) == pytest.approx(0.6)


@pytest.mark.parametrize(
    "model, limit, overlap",
    [
        ("additive", 7 / 3, 5 / 9),
        ("multiplicative", 2.5, 3 / 7),
        ("similarity", 2.5, 0.6),
    ],
)
def test_predict_dispatch(model, limit, overlap):
    measure = MarchenkoPasturMeasure(0.25)
    outcome = predict(measure, SpikeSpec((1.0,)), model)[0]
    assert outcome.detectable
    assert outcome.limit == pytest.approx(limit, rel=1e-12)
    assert outcome.overlap_sq == pytest.approx(overlap, rel=1e-10)


def test_predict_in_gap():
    measure = AtomicMeasure((0.0, 2.0), (0.5, 0.5))
    found = predict_in_gap(measure, (0.01, 1.99), SpikeSpec.of([1.0, -1.0]))
    assert [theta for theta, _ in found] == [1.0, -1.0]
    assert found[0][1] == pytest.approx((3 - math.sqrt(5)) / 2, rel=1e-12)
    assert found[1][1] == pytest.approx((1 + math.sqrt(5)) / 2, rel=1e-12)


def test_predict_in_gap_without_outlier():
    found = predict_in_gap(
        MarchenkoPasturMeasure(4.0), (0.01, 0.99), SpikeSpec((0.001,))
    )
    assert found == []


def test_predict_in_gap_rejects_support():
    with pytest.raises(DomainError):
        predict_in_gap(SemicircleMeasure(), (-1.0, 3.0), SpikeSpec((1.0,)))


def test_critical_threshold():
    assert critical_threshold(SemicircleMeasure(2.0)) == pytest.approx(2.0)
    assert critical_threshold(
        SemicircleMeasure(2.0), side=Side.BELOW_A
    ) == pytest.approx(-2.0)
    assert critical_threshold(
        MarchenkoPasturMeasure(0.25), Transform.T
    ) == pytest.approx(0.5)
    assert critical_threshold(AtomicMeasure((1.0,), (1.0,))) == 0.0


def test_to_records():
    prediction = predict(SemicircleMeasure(), SpikeSpec((2.0,)), "additive")
    (record,) = prediction.to_records()
    assert set(record) == {"theta", "limit", "detectable", "overlap_sq"}
    assert record["detectable"] is True
