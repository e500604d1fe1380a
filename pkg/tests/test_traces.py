import io
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from coldsim.traces import (
    RequestRecord,
    SyntheticTraceSpec,
    Trace,
    TraceParseError,
    generate_synthetic,
    parse_profiles,
    parse_trace,
    popularity_cdf,
    request_counts,
    synthesize_profiles,
    write_profiles,
    write_trace,
)


def trace_of(*function_ids: str) -> Trace:
    return Trace(tuple(RequestRecord(i, f) for i, f in enumerate(function_ids)))


def test_parse_sorts_stably_by_timestamp():
    text = "timestamp_ms,function_id\n5,c\n1,a\n1,b\n"
    trace = parse_trace(io.StringIO(text))
    assert [(r.timestamp_ms, r.function_id) for r in trace.records] == [
        (1, "a"),
        (1, "b"),
        (5, "c"),
    ]


def test_parse_header_only_is_empty_trace():
    trace = parse_trace(io.StringIO("timestamp_ms,function_id\n"))
    assert len(trace) == 0


def test_parse_missing_header():
    with pytest.raises(TraceParseError, match="line 1"):
        parse_trace(io.StringIO(""))
    with pytest.raises(TraceParseError, match="line 1"):
        parse_trace(io.StringIO("nope\n1,a\n"))


@pytest.mark.parametrize(
    "row,fragment",
    [
        ("1", "2 columns"),
        ("1,a,b", "2 columns"),
        ("x,a", "not an integer"),
        ("-1,a", ">= 0"),
        ("1,", "empty function_id"),
    ],
)
def test_parse_errors_name_the_line(row, fragment):
    text = f"timestamp_ms,function_id\n0,ok\n{row}\n"
    with pytest.raises(TraceParseError) as err:
        parse_trace(io.StringIO(text))
    assert "line 3" in str(err.value)
    assert fragment in str(err.value)


@given(
    st.lists(
        st.tuples(st.integers(0, 10**7), st.sampled_from(["a", "b", "c", "d-1", "e_2"])),
        max_size=60,
    )
)
def test_write_then_parse_is_identity(pairs):
    records = tuple(
        RequestRecord(ts, fid) for ts, fid in sorted(pairs, key=lambda p: p[0])
    )
    trace = Trace(records, "prop")
    buffer = io.StringIO()
    write_trace(trace, buffer)
    reparsed = parse_trace(io.StringIO(buffer.getvalue()))
    assert reparsed.records == trace.records


def test_unsorted_records_rejected():
    with pytest.raises(ValueError, match="sorted"):
        Trace((RequestRecord(5, "a"), RequestRecord(1, "b")))


def test_generate_synthetic_is_deterministic():
    spec = SyntheticTraceSpec(20, 500, 1.2, 60_000, seed=42)
    first, second = generate_synthetic(spec), generate_synthetic(spec)
    assert first.records == second.records
    out1, out2 = io.StringIO(), io.StringIO()
    write_trace(first, out1)
    write_trace(second, out2)
    assert out1.getvalue() == out2.getvalue()


def test_generate_uniform_counts_within_binomial_bounds():
    spec = SyntheticTraceSpec(10, 100_000, 0.0, 3_600_000, seed=7)
    counts = request_counts(generate_synthetic(spec))
    assert len(counts) == 10
    for count in counts.values():
        assert 9_500 <= count <= 10_500


def test_generate_zipf_top_functions_take_majority():
    spec = SyntheticTraceSpec(5266, 798_075, 1.1, 86_400_000, seed=11)
    trace = generate_synthetic(spec)
    assert len(trace) == 798_075
    counts = sorted(request_counts(trace).values(), reverse=True)
    top = int(0.05 * 5266)
    assert sum(counts[:top]) / 798_075 > 0.5


def test_generate_rejects_bad_spec():
    with pytest.raises(ValueError):
        SyntheticTraceSpec(10, 0, 1.0, 1000, seed=0)
    with pytest.raises(ValueError):
        SyntheticTraceSpec(0, 10, 1.0, 1000, seed=0)
    with pytest.raises(ValueError):
        SyntheticTraceSpec(10, 10, -0.5, 1000, seed=0)


def test_popularity_cdf_small_trace():
    summary = popularity_cdf(trace_of("A", "A", "A", "B"))
    assert summary.cdf_points == ((0.5, 0.75), (1.0, 1.0))
    # the top function (half the catalog) already covers 50% of requests
    assert summary.thresholds[0.5] == 0.5
    assert summary.thresholds[0.8] == 1.0


def test_popularity_cdf_uniform_two_functions():
    summary = popularity_cdf(trace_of("A", "B"))
    assert summary.thresholds[0.5] == 0.5
    assert summary.thresholds[0.8] == 1.0


def test_popularity_cdf_rank_ties_break_by_function_id():
    summary = popularity_cdf(trace_of("B", "A"), targets=[0.5])
    # A and B tie at one request each; A ranks first
    assert summary.cdf_points[0] == (0.5, 0.5)
    assert summary.thresholds[0.5] == 0.5


def test_popularity_cdf_empty_trace_errors():
    with pytest.raises(ValueError, match="empty trace"):
        popularity_cdf(Trace(()))


def test_popularity_cdf_custom_targets():
    summary = popularity_cdf(trace_of(*(["A"] * 9 + ["B"])), targets=[0.9, 0.95])
    assert summary.thresholds[0.9] == 0.5
    assert summary.thresholds[0.95] == 1.0


@given(st.lists(st.sampled_from("ABCDEF"), min_size=1, max_size=80), st.randoms())
def test_popularity_cdf_is_permutation_invariant(ids, rnd):
    baseline = popularity_cdf(trace_of(*ids))
    shuffled = list(ids)
    rnd.shuffle(shuffled)
    assert popularity_cdf(trace_of(*shuffled)) == baseline


@given(st.lists(st.sampled_from("ABCDEFGH"), min_size=1, max_size=80))
def test_popularity_cdf_shape(ids):
    summary = popularity_cdf(trace_of(*ids))
    assert summary.cdf_points[-1] == (1.0, 1.0)
    f_fracs = [f for f, _ in summary.cdf_points]
    r_fracs = [r for _, r in summary.cdf_points]
    assert f_fracs == sorted(f_fracs)
    assert r_fracs == sorted(r_fracs)
    assert summary.thresholds[0.8] >= summary.thresholds[0.5]


def test_higher_zipf_exponent_never_raises_coverage_threshold():
    thresholds = []
    for exponent in (0.0, 1.0, 2.0):
        spec = SyntheticTraceSpec(200, 100_000, exponent, 3_600_000, seed=3)
        summary = popularity_cdf(generate_synthetic(spec))
        thresholds.append(summary.thresholds[0.5])
    assert thresholds[0] >= thresholds[1] >= thresholds[2]


def test_synthesize_profiles_zero_range_gives_empty_deps():
    trace = trace_of("a", "b", "c")
    for profile in synthesize_profiles(trace, 50, deps_per_function=(0, 0), seed=1):
        assert profile.dependencies == frozenset()


def test_synthesize_profiles_deterministic():
    trace = trace_of("a", "b", "c", "a")
    first = synthesize_profiles(trace, 50, (1, 5), 1.0, seed=9)
    second = synthesize_profiles(trace, 50, (1, 5), 1.0, seed=9)
    assert first == second
    assert [p.function_id for p in first] == ["a", "b", "c"]


def test_synthesize_profiles_popular_package_beats_median():
    ids = [f"g{i:04d}" for i in range(1000)]
    trace = Trace(tuple(RequestRecord(i, fid) for i, fid in enumerate(ids)))
    profiles = synthesize_profiles(trace, 100, (1, 5), 1.0, seed=4)
    membership = Counter()
    for profile in profiles:
        membership.update(profile.dependencies)
    counts = sorted(membership.values(), reverse=True)
    assert counts[0] > counts[len(counts) // 2]


def test_synthesize_profiles_range_exceeding_catalog_errors():
    with pytest.raises(ValueError, match="catalog"):
        synthesize_profiles(trace_of("a"), 3, deps_per_function=(1, 4))


def test_profiles_csv_roundtrip():
    trace = trace_of("a", "b")
    profiles = synthesize_profiles(trace, 30, (0, 3), 1.0, seed=2)
    buffer = io.StringIO()
    write_profiles(profiles, buffer)
    assert parse_profiles(io.StringIO(buffer.getvalue())) == profiles


def test_parse_profiles_rejects_duplicates_and_bad_rows():
    header = "function_id,runtime,code_size_kb,exec_duration_ms,dependencies\n"
    with pytest.raises(TraceParseError, match="duplicate"):
        parse_profiles(io.StringIO(header + "a,python,1,1,\na,python,1,1,\n"))
    with pytest.raises(TraceParseError, match="line 2"):
        parse_profiles(io.StringIO(header + "a,python,x,1,\n"))
    with pytest.raises(TraceParseError, match="5 columns"):
        parse_profiles(io.StringIO(header + "a,python,1,1\n"))


def test_parse_profiles_empty_deps_column():
    header = "function_id,runtime,code_size_kb,exec_duration_ms,dependencies\n"
    profiles = parse_profiles(io.StringIO(header + "a,python,10,20,\nb,nodejs,1,2,x;y\n"))
    assert profiles[0].dependencies == frozenset()
    assert profiles[1].dependencies == frozenset({"x", "y"})
    assert profiles[1].runtime == "nodejs"
