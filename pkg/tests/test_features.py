import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zonelab import Grid, build_feature_stack, evaluate_feature, parse_feature, print_expr
from zonelab.features import Agg, BinOp, FeatureSpec, Neg, Num, Ref
from zonelab.errors import DslError, GridMismatchError, UnknownAliasError

import corpus
from conftest import CRS, make_band


ALIASES = {"nir", "red", "clay5", "clay15", "clay100", "rain"}


# ---------------------------------------------------------------------------
# Oracle: direct per-pixel recursive interpreter (floats + None for nodata)
# ---------------------------------------------------------------------------


def interpret_pixel(node, pixel_values):
    """Evaluate one pixel; returns None for nodata."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Ref):
        return pixel_values.get(node.name)
    if isinstance(node, Neg):
        v = interpret_pixel(node.operand, pixel_values)
        return None if v is None else -v
    if isinstance(node, Agg):
        import re

        regex = re.compile(".*".join(re.escape(p) for p in node.pattern.split("*")) + r"\Z")
        members = [v for k, v in sorted(pixel_values.items()) if regex.fullmatch(k) and v is not None]
        if not members:
            return None
        if node.func == "MEAN":
            return sum(members) / len(members)
        if node.func == "SUM":
            return sum(members)
        if node.func == "MIN":
            return min(members)
        return max(members)
    if isinstance(node, BinOp):
        left = interpret_pixel(node.left, pixel_values)
        right = interpret_pixel(node.right, pixel_values)
        if left is None or right is None:
            return None
        if node.op == "+":
            out = left + right
        elif node.op == "-":
            out = left - right
        elif node.op == "*":
            out = left * right
        else:
            if right == 0.0:
                return None
            out = left / right
        return out if np.isfinite(out) else None


def evaluate_oracle(spec, layers):
    grid = next(iter(layers.values())).grid
    out = np.zeros(grid.shape)
    mask = np.zeros(grid.shape, dtype=bool)
    for r in range(grid.height):
        for c in range(grid.width):
            pixel = {
                name: (band.values[r, c] if band.mask[r, c] else None)
                for name, band in layers.items()
            }
            v = interpret_pixel(spec.expr, pixel)
            if v is not None:
                out[r, c] = v
                mask[r, c] = True
    return out, mask


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def test_parse_ndvi_tree_shape():
    spec = parse_feature("ndvi:(nir-red)/(nir+red)", ALIASES)
    assert spec.name == "ndvi"
    assert spec.expr == BinOp(
        "/", BinOp("-", Ref("nir"), Ref("red")), BinOp("+", Ref("nir"), Ref("red"))
    )


def test_parse_equals_separator():
    a = parse_feature("ndvi:(nir-red)/(nir+red)", ALIASES)
    b = parse_feature("ndvi=(nir-red)/(nir+red)", ALIASES)
    assert a.expr == b.expr
    assert b.canonical() == "ndvi:(nir-red)/(nir+red)"


def test_parse_aggregate_glob():
    spec = parse_feature("clay:MEAN(clay*)", ALIASES)
    assert spec.expr == Agg("MEAN", "clay*")


def test_parse_glob_with_no_match_rejected():
    with pytest.raises(DslError, match="matches no alias"):
        parse_feature("f:MEAN(zzz*)", ALIASES)


def test_parse_unknown_alias_rejected():
    with pytest.raises(UnknownAliasError, match="mystery"):
        parse_feature("f:mystery+1", ALIASES)


def test_parse_name_collision_rejected():
    with pytest.raises(DslError, match="collides"):
        parse_feature("nir:red+1", ALIASES)


def test_parse_precedence_and_unary():
    spec = parse_feature("f:1+2*3", ALIASES)
    assert spec.expr == BinOp("+", Num(1.0), BinOp("*", Num(2.0), Num(3.0)))
    spec = parse_feature("f:-nir*red", ALIASES)
    assert spec.expr == BinOp("*", Neg(Ref("nir")), Ref("red"))
    spec = parse_feature("f:-(nir*red)", ALIASES)
    assert spec.expr == Neg(BinOp("*", Ref("nir"), Ref("red")))


@pytest.mark.parametrize(
    "text",
    [
        "f:",
        "f:(nir",
        "f:nir+",
        "f:nir red",
        "f:MEAN()",
        "f:MEAN(clay*",
        "f:@",
        "noseparator",
        "9bad:nir",
    ],
)
def test_parse_syntax_errors_carry_offsets(text):
    with pytest.raises(DslError) as err:
        parse_feature(text, ALIASES)
    assert err.value.offset is not None
    assert 0 <= err.value.offset <= len(text)


def test_corpus_features_parse():
    names = [line.split(":")[0] for line in corpus.alias_lines()]
    for line in corpus.feature_lines():
        spec = parse_feature(line, names)
        assert spec.canonical() == line


# -- round trip ----------------------------------------------------------------

_names = st.sampled_from(sorted(ALIASES))


def _trees(depth):
    if depth == 0:
        return st.one_of(
            st.builds(Num, st.floats(min_value=0.0, max_value=1e6, allow_nan=False)),
            st.builds(Ref, _names),
            st.builds(Agg, st.sampled_from(["MEAN", "SUM", "MIN", "MAX"]), st.just("clay*")),
        )
    sub = _trees(depth - 1)
    return st.one_of(
        sub,
        st.builds(Neg, sub),
        st.builds(BinOp, st.sampled_from(["+", "-", "*", "/"]), sub, sub),
    )


@settings(max_examples=200, deadline=None)
@given(_trees(6))
def test_print_parse_round_trip(tree):
    text = print_expr(tree)
    spec = parse_feature(f"f:{text}", ALIASES)
    assert spec.expr == tree


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@pytest.fixture
def grid():
    return Grid(CRS, 0.0, 8.0, 1.0, 1.0, 8, 8)


def test_ndvi_closed_form_constant(grid):
    layers = {
        "nir": make_band(grid, np.full(grid.shape, 0.6), name="nir"),
        "red": make_band(grid, np.full(grid.shape, 0.2), name="red"),
    }
    band = evaluate_feature(parse_feature("ndvi:(nir-red)/(nir+red)", layers), layers)
    assert np.allclose(band.values, 0.5, rtol=0, atol=1e-15)
    assert band.mask.all()


def test_ndvi_symmetric_zero(grid, rng):
    values = rng.random(grid.shape) + 0.1
    layers = {
        "nir": make_band(grid, values, name="nir"),
        "red": make_band(grid, values.copy(), name="red"),
    }
    band = evaluate_feature(parse_feature("ndvi:(nir-red)/(nir+red)", layers), layers)
    assert np.allclose(band.values[band.mask], 0.0, atol=1e-15)


def test_mean_glob_with_hole_matches_oracle(grid, rng):
    hole = np.ones(grid.shape, dtype=bool)
    hole[1:3, 1:3] = False
    layers = {
        "clay5": make_band(grid, np.full(grid.shape, 1.0), name="clay5"),
        "clay15": make_band(grid, np.full(grid.shape, 2.0), mask=hole, name="clay15"),
        "clay100": make_band(grid, np.full(grid.shape, 3.0), name="clay100"),
    }
    spec = parse_feature("clay:MEAN(clay*)", layers)
    band = evaluate_feature(spec, layers)
    expected, expected_mask = evaluate_oracle(spec, layers)
    assert np.array_equal(band.mask, expected_mask)
    np.testing.assert_allclose(band.values[band.mask], expected[expected_mask], rtol=1e-12)
    # spot values: full stack averages to 2, the hole averages {1, 3}
    assert band.values[0, 0] == pytest.approx(2.0)
    assert band.values[1, 1] == pytest.approx(2.0)
    assert band.mask[1, 1]  # aggregate stays valid when one member is nodata


def test_division_by_zero_is_nodata(grid):
    num = make_band(grid, np.ones(grid.shape), name="nir")
    den_values = np.ones(grid.shape)
    den_values[3, 3] = 0.0
    den = make_band(grid, den_values, name="red")
    layers = {"nir": num, "red": den}
    band = evaluate_feature(parse_feature("f:nir/red", layers), layers)
    assert not band.mask[3, 3]
    assert band.mask.sum() == grid.size - 1


def test_random_expressions_match_oracle(grid, rng):
    layers = {
        name: make_band(
            grid,
            rng.normal(2.0, 1.0, grid.shape),
            mask=rng.random(grid.shape) > 0.15,
            name=name,
        )
        for name in ("nir", "red", "clay5", "clay15", "clay100")
    }
    texts = [
        "f:(nir-red)/(nir+red)",
        "f:nir*red-clay5/2",
        "f:MEAN(clay*)*2-SUM(clay*)/3",
        "f:-nir+MAX(clay*)-MIN(clay*)",
        "f:nir/(red-red)",  # division by zero everywhere -> all nodata
    ]
    for text in texts:
        spec = parse_feature(text, layers)
        band = evaluate_feature(spec, layers)
        expected, expected_mask = evaluate_oracle(spec, layers)
        assert np.array_equal(band.mask, expected_mask), text
        np.testing.assert_allclose(
            band.values[band.mask], expected[expected_mask], rtol=1e-12, err_msg=text
        )


def test_single_match_glob_equals_alias(grid, rng):
    layers = {"rain": make_band(grid, rng.random(grid.shape), name="rain")}
    for func in ("MEAN", "SUM", "MIN", "MAX"):
        band = evaluate_feature(parse_feature(f"f:{func}(rain*)", layers), layers)
        assert np.array_equal(band.values, layers["rain"].values), func


def test_nodata_monotone_under_input_masking(grid, rng):
    full = {
        "nir": make_band(grid, rng.random(grid.shape) + 1.0, name="nir"),
        "red": make_band(grid, rng.random(grid.shape) + 1.0, name="red"),
    }
    spec = parse_feature("f:(nir-red)/(nir+red)", full)
    before = evaluate_feature(spec, full)
    punched = np.ones(grid.shape, dtype=bool)
    punched[4, 4] = False
    masked = dict(full)
    masked["nir"] = make_band(grid, full["nir"].values, mask=punched, name="nir")
    after = evaluate_feature(spec, masked)
    # masking an input can only remove validity, never add it
    assert np.all(~after.mask | before.mask)
    assert not after.mask[4, 4]


def test_grid_mismatch_rejected(grid):
    other = Grid(CRS, 0.0, 4.0, 1.0, 1.0, 4, 4)
    layers = {
        "nir": make_band(grid, np.ones(grid.shape), name="nir"),
        "red": make_band(other, np.ones(other.shape), name="red"),
    }
    with pytest.raises(GridMismatchError):
        evaluate_feature(parse_feature("f:nir+red", layers), layers)


def test_missing_alias_at_eval_rejected(grid):
    spec = parse_feature("f:nir+red", {"nir", "red"})
    with pytest.raises(UnknownAliasError):
        evaluate_feature(spec, {"nir": make_band(grid, np.ones(grid.shape), name="nir")})


# ---------------------------------------------------------------------------
# Stacking
# ---------------------------------------------------------------------------


def test_stack_single_feature(grid, rng):
    layers = {"nir": make_band(grid, rng.random(grid.shape), name="nir")}
    stack = build_feature_stack([parse_feature("f:nir*2", layers)], layers)
    assert stack.names == ["f"]


def test_stack_preserves_order(grid, rng):
    layers = {
        "nir": make_band(grid, rng.random(grid.shape), name="nir"),
        "red": make_band(grid, rng.random(grid.shape), name="red"),
    }
    specs = [parse_feature("ndvi:(nir-red)/(nir+red)", layers), parse_feature("rainx:red*1", layers)]
    stack = build_feature_stack(specs, layers)
    assert stack.names == ["ndvi", "rainx"]


def test_stack_duplicate_names_rejected(grid):
    layers = {"nir": make_band(grid, np.ones(grid.shape), name="nir")}
    specs = [parse_feature("f:nir", layers), parse_feature("f:nir*2", {"nir"})]
    with pytest.raises(DslError, match="duplicate"):
        build_feature_stack(specs, layers)


def test_soil_feature_set_matches_oracle(grid, rng):
    # five-band soil stack over depth-sliced aliases, means checked per pixel
    names = []
    layers = {}
    for prefix in ("clay", "sand", "soc", "n", "ph"):
        for depth in (5, 15, 30, 60, 100):
            name = f"{prefix}{depth}"
            names.append(name)
            layers[name] = make_band(
                grid, rng.normal(10, 3, grid.shape), mask=rng.random(grid.shape) > 0.1, name=name
            )
    feature_texts = [
        "clay:MEAN(clay*)",
        "sand:MEAN(sand*)",
        "soc:MEAN(soc*)",
        "ntot:MEAN(n*)",
        "ph:MEAN(ph*)",
    ]
    specs = [parse_feature(t, names) for t in feature_texts]
    stack = build_feature_stack(specs, layers)
    assert stack.names == ["clay", "sand", "soc", "ntot", "ph"]
    for spec, band in zip(specs, stack.bands):
        expected, expected_mask = evaluate_oracle(spec, layers)
        assert np.array_equal(band.mask, expected_mask), spec.name
        np.testing.assert_allclose(
            band.values[band.mask], expected[expected_mask], rtol=1e-12, err_msg=spec.name
        )
