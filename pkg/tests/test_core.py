import json
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ahatc.core import (
    IDENTITY,
    RELU,
    AffineMap,
    AhaLayer,
    AhatModel,
    AlphabetError,
    DimensionError,
    EmptyWordError,
    FeedForwardNet,
    accepts,
    accepts_counts,
    eval_aha_layer,
    eval_ffn,
    format_rational,
    is_uniform,
    parse_rational,
    rat,
    run_ahat,
    run_positions,
    tie_report,
)
from ahatc.modelio import ModelFormatError, dumps_model, loads_model, model_to_dict

from conftest import maj_count, sqrt_count, words_up_to

MIN_NET = FeedForwardNet(
    (
        (AffineMap.from_dense([[-1, 1], [0, 1], [0, -1]], [0, 0, 0]), RELU),
        (AffineMap.from_dense([[-1, 1, -1]], [0]), IDENTITY),
    )
)
ABS_NET = FeedForwardNet(
    (
        (AffineMap.from_dense([[1], [-1]], [0, 0]), RELU),
        (AffineMap.from_dense([[1, 1]], [0]), IDENTITY),
    )
)


def test_rat_rejects_floats_and_bools():
    assert rat(3) == rat("3/1") == rat(Fraction(6, 2))
    with pytest.raises(TypeError):
        rat(0.5)
    with pytest.raises(TypeError):
        rat(True)


@pytest.mark.parametrize("text", ["2", "4/2", "1/-2", " 1/2", "+1/2", "0/5", "1/0", "a/b"])
def test_parse_rational_strict_rejects(text):
    with pytest.raises(ValueError):
        parse_rational(text)


@pytest.mark.parametrize("q, text", [(rat(-3) / 4, "-3/4"), (rat(2), "2/1"), (rat(0), "0/1")])
def test_canonical_rational_text(q, text):
    assert format_rational(q) == text
    assert parse_rational(text) == q


def test_min_net():
    assert eval_ffn(MIN_NET, rat_vec(3, 5)) == (3,)
    assert eval_ffn(MIN_NET, rat_vec(5, 3)) == (3,)


def test_abs_net():
    assert eval_ffn(ABS_NET, (rat(-7) / 2,)) == (rat(7) / 2,)


def test_ffn_dimension_error_names_layer():
    with pytest.raises(DimensionError, match="layer 0"):
        eval_ffn(MIN_NET, rat_vec(1, 2, 3))


def test_affine_map_wrong_dimension():
    m = AffineMap.identity(2)
    with pytest.raises(DimensionError):
        m.apply(rat_vec(1, 2, 3))


def rat_vec(*xs):
    return tuple(rat(x) for x in xs)


def unit(i, d):
    return tuple(rat(1 if k == i else 0) for k in range(d))


def frequency_layer(d):
    net = FeedForwardNet(((AffineMap.select(2 * d, list(range(d, 2 * d))), IDENTITY),))
    return AhaLayer(AffineMap.zero(d, 1, [1]), AffineMap.zero(d, 1, [1]), AffineMap.identity(d), net)


def test_uniform_layer_computes_frequencies():
    seq = [unit(0, 3), unit(0, 3), unit(1, 3), unit(2, 3)]
    out, sets = eval_aha_layer(frequency_layer(3), seq)
    assert all(v == (rat(1) / 2, rat(1) / 4, rat(1) / 4) for v in out)
    assert all(s == frozenset(range(4)) for s in sets)


def test_tie_between_a_positions():
    d = 2
    key = AffineMap.zero(d, 1, [1])
    query = AffineMap.from_dense([[1, 0]], [0])
    net = FeedForwardNet(((AffineMap.select(2 * d, [2, 3]), IDENTITY),))
    layer = AhaLayer(query, key, AffineMap.identity(d), net)
    out, sets = eval_aha_layer(layer, [unit(0, 2), unit(0, 2), unit(1, 2)])
    assert sets == [frozenset({0, 1})] * 3
    assert out == [unit(0, 2)] * 3


def test_single_position_attends_to_itself():
    d = 2
    layer = AhaLayer(AffineMap.identity(d), AffineMap.identity(d), AffineMap.identity(d),
                     FeedForwardNet(((AffineMap.select(2 * d, [2, 3]), IDENTITY),)))
    out, sets = eval_aha_layer(layer, [rat_vec(3, -1)])
    assert sets == [frozenset({0})]
    assert out == [rat_vec(3, -1)]


def test_eval_aha_layer_empty_sequence():
    with pytest.raises(EmptyWordError):
        eval_aha_layer(frequency_layer(2), [])


def test_is_uniform():
    assert is_uniform(frequency_layer(2))
    d = 2
    layer = AhaLayer(AffineMap.identity(d), AffineMap.identity(d), AffineMap.identity(d),
                     FeedForwardNet(((AffineMap.select(2 * d, [2, 3]), IDENTITY),)))
    assert not is_uniform(layer)


def test_compiled_frequency_layer_is_uniform(sqrt_sal):
    assert all(is_uniform(layer) for layer in sqrt_sal.layers)


def test_maj_run(maj_nem):
    assert accepts(maj_nem, "aab")
    assert not accepts(maj_nem, "ab")


def test_sqrt_run(sqrt_nem):
    assert not accepts(sqrt_nem, "aaab")
    assert accepts(sqrt_nem, "ab")


def test_empty_word_and_bad_letter(maj_sal):
    with pytest.raises(EmptyWordError):
        run_ahat(maj_sal, "")
    with pytest.raises(AlphabetError):
        run_ahat(maj_sal, "abc")
    with pytest.raises(AlphabetError):
        run_ahat(maj_sal, ["a", "$"])


def test_tie_report_examples(sqrt_nem, maj_sal):
    assert tie_report(sqrt_nem, "ab")[0] == [2, 1]
    assert tie_report(sqrt_nem, "ab") == [[2, 1], [2, 2]]
    assert all(n == 1 for layer in tie_report(sqrt_nem, "a") for n in layer)
    # the end marker is a position too
    assert all(n == 5 for layer in tie_report(maj_sal, "aabb") for n in layer)


def test_maj_words(maj_sal, maj_nem):
    for w in words_up_to("ab", 7):
        assert accepts(maj_sal, w) == maj_count(w) == accepts(maj_nem, w)


def test_sqrt_words(sqrt_nem):
    for w in words_up_to("ab", 8):
        assert accepts(sqrt_nem, w) == sqrt_count(w)


def test_accepts_counts_matches_words(sqrt_sal, sqrt_nem):
    for w in words_up_to("ab", 6):
        c = {"a": w.count("a"), "b": w.count("b")}
        assert accepts_counts(sqrt_sal, dict(c, **{"$": 1})) == sqrt_count(w)
        assert accepts_counts(sqrt_nem, c, last=w[-1]) == sqrt_count(w)


def test_trace_is_deterministic(sqrt_sal):
    t1 = run_ahat(sqrt_sal, "abba")[1]
    t2 = run_ahat(sqrt_sal, "abba")[1]
    assert t1.activations == t2.activations and t1.argmax == t2.argmax


def test_constant_pe_shifts_every_position():
    base = AhatModel(("a", "b"), {"a": unit(0, 3), "b": unit(1, 3), "$": unit(2, 3)}, (frequency_layer(3),))
    shifted = AhatModel(base.alphabet, base.embedding, base.layers, constant_pe=rat_vec(1, 0, 0))
    out = run_ahat(shifted, "ab")[1].output
    assert out == (rat(4) / 3, rat(1) / 3, rat(1) / 3)


def test_model_validation():
    emb = {"a": unit(0, 2), "$": unit(1, 2)}
    with pytest.raises(AlphabetError):
        AhatModel(("a",), {"a": unit(0, 2)}, ())
    with pytest.raises(AlphabetError):
        AhatModel(("a", "$"), emb, ())
    with pytest.raises(DimensionError):
        AhatModel(("a",), emb, (frequency_layer(3),))


# random models for cross-checking the class-sharing evaluator

small = st.integers(-2, 2)


@st.composite
def random_models(draw):
    d = draw(st.integers(1, 3))
    letters = ("a", "b", "c")[: draw(st.integers(1, 3))]
    use_end = draw(st.booleans())
    symbols = letters + (("$",) if use_end else ())
    emb = {a: tuple(rat(draw(small)) for _ in range(d)) for a in symbols}
    layers = []
    for _ in range(draw(st.integers(1, 2))):
        m = draw(st.integers(1, 2))
        k = draw(st.integers(1, 2))
        e = draw(st.integers(1, 3))

        def amap(rows, cols):
            return AffineMap.from_dense([[draw(small) for _ in range(cols)] for _ in range(rows)],
                                        [draw(small) for _ in range(rows)])

        net = FeedForwardNet(((amap(e, d + k), RELU), (amap(e, e), IDENTITY)))
        layers.append(AhaLayer(amap(m, d), amap(m, d), amap(k, d), net))
        d = e
    return AhatModel(letters, emb, tuple(layers), uses_end_marker=use_end, end_marker="$" if use_end else None)


@settings(max_examples=60, deadline=None)
@given(random_models(), st.data())
def test_class_sharing_matches_reference(model, data):
    word = data.draw(st.lists(st.sampled_from(model.alphabet), min_size=1, max_size=7))
    ok, trace = run_ahat(model, word)
    assert trace.output == run_positions(model, word)
    assert ok == (trace.output[0] > 0)
    full = trace.word
    for layer_out in trace.activations:
        for i in range(len(full)):
            for j in range(len(full)):
                if full[i] == full[j]:
                    assert layer_out[i] == layer_out[j]
    # argmax soundness
    for li, layer in enumerate(model.layers):
        xs = trace.activations[li]
        for i in range(len(full)):
            k = layer.key.apply(xs[i])
            scores = [sum((a * b for a, b in zip(k, layer.query.apply(xs[j]))), rat(0)) for j in range(len(full))]
            top = max(scores)
            assert trace.argmax[li][i] == frozenset(j for j, s in enumerate(scores) if s == top)
            assert len(trace.argmax[li][i]) >= 1
    perm = data.draw(st.permutations(word))
    assert accepts(model, perm) == ok


@settings(max_examples=30, deadline=None)
@given(random_models())
def test_model_json_round_trip(model):
    text = dumps_model(model)
    assert loads_model(text) == model
    assert dumps_model(loads_model(text)) == text


def test_compiled_model_json_round_trip(sqrt_sal):
    back = loads_model(dumps_model(sqrt_sal))
    assert back == sqrt_sal
    assert back.source == sqrt_sal.source


def _mutated(model, fn):
    d = model_to_dict(model)
    fn(d)
    return json.dumps(d)


@pytest.mark.parametrize(
    "mutation",
    [
        lambda d: d["embedding"].__setitem__("a", ["2/2"] + d["embedding"]["a"][1:]),
        lambda d: d["embedding"].__setitem__("a", ["1"] + d["embedding"]["a"][1:]),
        lambda d: d["embedding"].__setitem__("a", [0.5] + d["embedding"]["a"][1:]),
        lambda d: d.__setitem__("positional_encoding", [["0/1"]]),
        lambda d: d.__setitem__("colour", "blue"),
        lambda d: d.pop("layers"),
        lambda d: d["layers"][0]["net"][0].__setitem__("activation", "tanh"),
    ],
)
def test_loader_rejects(maj_sal, mutation):
    with pytest.raises(ModelFormatError):
        loads_model(_mutated(maj_sal, mutation))
