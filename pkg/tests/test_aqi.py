import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skycast.aqi import (
    AqiGrade,
    GRADES,
    NegativeConcentration,
    PollutantRecord,
    UnknownPollutant,
    composite_aqi,
    default_table,
    grade_of_aqi,
    recommendation_of_grade,
    sub_index,
)


def test_table_loads_and_versioned():
    table = default_table()
    assert table.version.startswith("epa-")
    assert set(table.rows) == {"pm25", "pm10", "o3", "co", "no2"}


def test_sub_index_row_endpoints_exact():
    table = default_table()
    for pollutant, rows in table.rows.items():
        for row in rows:
            assert sub_index(pollutant, row.conc_lo, table) == pytest.approx(row.aqi_lo)
            assert sub_index(pollutant, row.conc_hi, table) == pytest.approx(row.aqi_hi)


def test_sub_index_hand_example():
    # pm25 = 45.0 inside (35.5, 55.4 -> 101, 150)
    value = sub_index("pm25", 45.0)
    assert value == pytest.approx(101 + 49 * 9.5 / 19.9, abs=1e-9)
    assert value == pytest.approx(124.39, abs=0.01)


def test_sub_index_zero_is_zero():
    for pollutant in ("pm25", "pm10", "o3", "co", "no2"):
        assert sub_index(pollutant, 0.0) == 0.0


def test_sub_index_clamps_above_top_row():
    table = default_table()
    top = table.rows["pm25"][-1]
    assert sub_index("pm25", top.conc_hi + 500) == top.aqi_hi


def test_sub_index_errors():
    with pytest.raises(UnknownPollutant):
        sub_index("so2", 10.0)
    with pytest.raises(NegativeConcentration):
        sub_index("pm25", -1.0)


def test_sub_index_boundary_continuity():
    table = default_table()
    for pollutant, rows in table.rows.items():
        for prev, nxt in zip(rows, rows[1:]):
            lo = sub_index(pollutant, prev.conc_hi, table)
            hi = sub_index(pollutant, nxt.conc_lo, table)
            assert hi - lo <= 1.0 + 1e-9
            assert hi > lo


@given(
    st.sampled_from(("pm25", "pm10", "o3", "co", "no2")),
    st.floats(0, 700),
    st.floats(0, 700),
)
@settings(max_examples=300, deadline=None)
def test_sub_index_monotone(pollutant, a, b):
    lo, hi = sorted((a, b))
    assert sub_index(pollutant, lo) <= sub_index(pollutant, hi) + 1e-12


def test_composite_is_max_of_sub_indices():
    rec = PollutantRecord(pm25=45.0, pm10=20.0, o3=30.0, co=1.0, no2=20.0)
    expected = max(sub_index(name, value) for name, value in rec.items())
    assert composite_aqi(rec) == pytest.approx(expected)
    assert composite_aqi(rec) == pytest.approx(sub_index("pm25", 45.0))


def test_composite_single_pollutant():
    rec = PollutantRecord(o3=80.0)
    assert composite_aqi(rec) == pytest.approx(sub_index("o3", 80.0))


def test_composite_all_zero():
    rec = PollutantRecord(pm25=0, pm10=0, o3=0, co=0, no2=0)
    assert composite_aqi(rec) == 0.0


def test_pollutant_record_validation():
    with pytest.raises(ValueError):
        PollutantRecord()
    with pytest.raises(NegativeConcentration):
        PollutantRecord(pm25=-3.0)


def test_grade_bands():
    assert grade_of_aqi(0) is AqiGrade.GOOD
    assert grade_of_aqi(50) is AqiGrade.GOOD
    assert grade_of_aqi(51) is AqiGrade.MODERATE
    assert grade_of_aqi(100) is AqiGrade.MODERATE
    assert grade_of_aqi(101) is AqiGrade.UNHEALTHY_SENSITIVE
    assert grade_of_aqi(110) is AqiGrade.UNHEALTHY_SENSITIVE
    assert grade_of_aqi(150) is AqiGrade.UNHEALTHY_SENSITIVE
    assert grade_of_aqi(151) is AqiGrade.UNHEALTHY
    assert grade_of_aqi(200) is AqiGrade.UNHEALTHY
    assert grade_of_aqi(201) is AqiGrade.VERY_UNHEALTHY
    assert grade_of_aqi(350) is AqiGrade.VERY_UNHEALTHY


def test_grade_rounds_half_up():
    assert grade_of_aqi(50.4) is AqiGrade.GOOD
    assert grade_of_aqi(50.5) is AqiGrade.MODERATE


@given(st.floats(0, 600), st.floats(0, 600))
@settings(max_examples=200, deadline=None)
def test_grade_monotone(a, b):
    lo, hi = sorted((a, b))
    assert grade_of_aqi(lo).severity <= grade_of_aqi(hi).severity


def test_recommendations_complete_and_distinct():
    colors = {recommendation_of_grade(g).color for g in GRADES}
    texts = {recommendation_of_grade(g).advice for g in GRADES}
    assert len(colors) == 5
    assert len(texts) == 5


def test_epa_color_codes():
    assert AqiGrade.GOOD.color == "#00E400"
    assert AqiGrade.MODERATE.color == "#FFFF00"
    assert AqiGrade.UNHEALTHY_SENSITIVE.color == "#FF7E00"
    assert AqiGrade.UNHEALTHY.color == "#FF0000"
    assert AqiGrade.VERY_UNHEALTHY.color == "#8F3F97"


def test_sensitive_groups_text_mentions_them():
    rec = recommendation_of_grade(AqiGrade.UNHEALTHY_SENSITIVE)
    assert "sensitive" in rec.advice.lower()


def test_grade_labels_match_published_names():
    assert [g.label for g in GRADES] == [
        "Good",
        "Moderate",
        "Unhealthy for Sensitive Groups",
        "Unhealthy",
        "Very Unhealthy",
    ]


def test_grade_from_label_round_trip():
    for g in GRADES:
        assert AqiGrade.from_label(g.label) is g
    with pytest.raises(ValueError):
        AqiGrade.from_label("Purple")
