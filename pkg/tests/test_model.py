import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boolnet.bitmatrix import BitMatrix
from boolnet.errors import StructuralError
from boolnet.model import (
    AND,
    CONST0,
    CONST1,
    DEPENDS_A,
    DEPENDS_B,
    NAND,
    NOT_A,
    OR,
    PROJ_A,
    PROJ_B,
    TABLE_BITS,
    XOR,
    HardCircuit,
    HardLayer,
    LayerParams,
    NetworkModel,
    accuracy,
    estimate_interconnect_memory,
    eval_circuit,
    eval_circuit_layers,
    eval_code,
    format_bytes,
    group_logits,
    harden,
    predict,
    random_network,
    sample_distinct,
)


# ---------------------------------------------------------------- tables


def test_named_codes_truth_tables():
    a = np.array([0, 0, 1, 1])
    b = np.array([0, 1, 0, 1])
    assert np.array_equal(eval_code(AND, a, b), a & b)
    assert np.array_equal(eval_code(OR, a, b), a | b)
    assert np.array_equal(eval_code(XOR, a, b), a ^ b)
    assert np.array_equal(eval_code(NAND, a, b), 1 - (a & b))
    assert np.array_equal(eval_code(PROJ_A, a, b), a)
    assert np.array_equal(eval_code(PROJ_B, a, b), b)
    assert np.array_equal(eval_code(NOT_A, a, b), 1 - a)
    assert np.array_equal(eval_code(CONST0, a, b), np.zeros(4, np.uint8))
    assert np.array_equal(eval_code(CONST1, a, b), np.ones(4, np.uint8))


def test_table_bits_matches_eval_code():
    for code in range(16):
        for a in (0, 1):
            for b in (0, 1):
                assert TABLE_BITS[code, 2 * a + b] == eval_code(code, a, b)


def test_dependency_masks():
    # Brute-force: code depends on an input iff flipping it can change
    # the output.
    for code in range(16):
        dep_a = any(
            eval_code(code, 0, b) != eval_code(code, 1, b) for b in (0, 1)
        )
        dep_b = any(
            eval_code(code, a, 0) != eval_code(code, a, 1) for a in (0, 1)
        )
        assert DEPENDS_A[code] == dep_a
        assert DEPENDS_B[code] == dep_b


# ------------------------------------------------------------- sampling


@settings(max_examples=40, deadline=None)
@given(
    n_slots=st.integers(1, 30),
    width=st.integers(1, 50),
    seed=st.integers(0, 999),
    data=st.data(),
)
def test_sample_distinct_property(n_slots, width, seed, data):
    count = data.draw(st.integers(1, width))
    rng = np.random.default_rng(seed)
    out = sample_distinct(rng, n_slots, width, count)
    assert out.shape == (n_slots, count)
    assert out.min() >= 0 and out.max() < width
    for row in out:
        assert len(set(row.tolist())) == count


def test_sample_distinct_overflows():
    with pytest.raises(StructuralError):
        sample_distinct(np.random.default_rng(0), 2, 3, 4)


def test_random_network_init():
    model = random_network(12, [8, 6], 2, candidates_per_slot=4, seed=7)
    model.validate()
    assert model.layer_widths == [8, 6]
    for layer in model.layers:
        # Connection scores start neutral; candidate choice is the tie-break.
        assert not layer.conn_weights.any()
        assert layer.gate_logits.std() > 0
    # Same seed, same model.
    again = random_network(12, [8, 6], 2, candidates_per_slot=4, seed=7)
    for l1, l2 in zip(model.layers, again.layers):
        assert np.array_equal(l1.candidates, l2.candidates)
        assert np.array_equal(l1.gate_logits, l2.gate_logits)


# ------------------------------------------------------------ hardening


def test_selected_slots_hand_trace():
    # Weights [0.1, 0.8, 0.5, 0.2] over candidates [1, 3, 4, 6]: the 0.8
    # score wins, so the slot reads signal 3.
    layer = LayerParams(
        gate_logits=np.zeros((1, 16)),
        candidates=np.array([[[1, 3, 4, 6], [0, 2, 5, 7]]]),
        conn_weights=np.array(
            [[[0.1, 0.8, 0.5, 0.2], [0.0, 0.0, 0.0, 0.0]]]
        ),
    )
    sel = layer.selected_slots()
    assert sel[0, 0] == 3
    assert sel[0, 1] == 0  # all-equal scores: lowest index wins


def test_harden_argmax_ties_take_first():
    logits = np.zeros((1, 16), dtype=np.float32)
    logits[0, [XOR, OR]] = 2.0  # tie between codes 6 and 14
    layer = LayerParams(
        gate_logits=logits,
        candidates=np.array([[[0, 1], [1, 0]]]),
        conn_weights=np.zeros((1, 2, 2)),
    )
    model = NetworkModel(2, [layer], 1, tau=1.0)
    hard = harden(model)
    assert hard.layers[0].code[0] == XOR
    assert hard.layers[0].in0[0] == 0 and hard.layers[0].in1[0] == 1


def _naive_eval(circuit: HardCircuit, x: np.ndarray) -> list[np.ndarray]:
    """Per-sample, per-gate reference interpreter."""
    outs = []
    for lay in circuit.layers:
        nxt = np.zeros((x.shape[0], lay.n_gates), dtype=np.uint8)
        for s in range(x.shape[0]):
            for g in range(lay.n_gates):
                a = int(x[s, lay.in0[g]])
                b = int(x[s, lay.in1[g]])
                nxt[s, g] = (int(lay.code[g]) >> (2 * a + b)) & 1
        outs.append(nxt)
        x = nxt
    return outs


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), batch=st.integers(1, 70))
def test_circuit_eval_matches_naive_interpreter(seed, batch):
    rng = np.random.default_rng(seed)
    model = random_network(
        7, [9, 5, 4], 2, candidates_per_slot=3, seed=rng, tau=2.0
    )
    for layer in model.layers:
        layer.gate_logits = rng.normal(size=layer.gate_logits.shape).astype(
            np.float32
        )
        layer.conn_weights = rng.normal(size=layer.conn_weights.shape).astype(
            np.float32
        )
    circuit = harden(model)
    x = rng.integers(0, 2, size=(batch, 7)).astype(np.uint8)
    got = eval_circuit_layers(circuit, BitMatrix.from_array(x))
    want = _naive_eval(circuit, x)
    for bm, ref in zip(got, want):
        assert np.array_equal(bm.to_array(), ref)


def test_eval_batch_split_invariance():
    rng = np.random.default_rng(3)
    model = random_network(6, [8, 4], 2, candidates_per_slot=3, seed=rng)
    circuit = harden(model)
    x = rng.integers(0, 2, size=(100, 6)).astype(np.uint8)
    whole = eval_circuit(circuit, BitMatrix.from_array(x)).to_array()
    parts = [
        eval_circuit(circuit, BitMatrix.from_array(x[i : i + 33])).to_array()
        for i in range(0, 100, 33)
    ]
    assert np.array_equal(whole, np.concatenate(parts, axis=0))


def test_eval_wrong_width_raises():
    model = random_network(6, [4], 2, candidates_per_slot=2, seed=0)
    with pytest.raises(StructuralError):
        eval_circuit(harden(model), BitMatrix.zeros(2, 5))


# ------------------------------------------------------------- group sum


def test_group_logits_hand_example():
    # Two classes, three gates each: sums (3, 5) over tau=30.
    acts = BitMatrix.from_array([[1, 1, 1, 1, 1, 1, 1, 1, 0, 0]])
    logits = group_logits(acts, 2, tau=30.0)
    assert logits.shape == (1, 2)
    assert logits[0, 0] == pytest.approx(5 / 30)
    assert logits[0, 1] == pytest.approx(3 / 30)


def test_group_logits_rejects_ragged_width():
    with pytest.raises(StructuralError):
        group_logits(BitMatrix.zeros(1, 10), 3, tau=1.0)


def test_predict_and_accuracy():
    lay = HardLayer(
        code=[PROJ_A, PROJ_A, PROJ_B, PROJ_B],
        in0=[0, 0, 0, 0],
        in1=[1, 1, 1, 1],
    )
    circuit = HardCircuit(2, [lay], 2, tau=1.0)
    x = BitMatrix.from_array([[1, 0], [0, 1], [1, 1]])
    pred = predict(circuit, x)
    assert np.array_equal(pred, [0, 1, 0])  # argmax ties -> class 0
    assert accuracy(circuit, x, [0, 1, 1]) == pytest.approx(2 / 3)


# ---------------------------------------------------------------- memory


def test_memory_formula_values():
    est = estimate_interconnect_memory(12000, 30720, k=2, C=8)
    assert est.bytes_full == 2 * 12000 * 30720 * 4
    assert est.bytes_sparse == 2 * 12000 * 8 * 8
    assert format_bytes(est.bytes_full) == "2.949 GB"
    assert format_bytes(est.bytes_sparse) == "1.536 MB"


@settings(max_examples=50, deadline=None)
@given(
    G=st.integers(1, 10**5),
    I=st.integers(1, 10**6),
    C=st.integers(1, 64),
    k=st.integers(1, 4),
)
def test_memory_ratio_property(G, I, C, k):
    est = estimate_interconnect_memory(G, I, k=k, C=C)
    # Candidate form replaces I scores with C (score, index) pairs.
    assert est.ratio == pytest.approx(2 * C / I)


def test_memory_rejects_nonpositive():
    with pytest.raises(StructuralError):
        estimate_interconnect_memory(0, 10)


def test_format_bytes_units():
    assert format_bytes(999) == "999 B"
    assert format_bytes(1000) == "1.000 kB"
    assert format_bytes(5_898_240_000) == "5.898 GB"


# ------------------------------------------------------------ validation


def test_validate_catches_bad_shapes_and_ranges():
    with pytest.raises(StructuralError):
        LayerParams(
            gate_logits=np.zeros((2, 15)),
            candidates=np.zeros((2, 2, 3), dtype=np.int32),
            conn_weights=np.zeros((2, 2, 3)),
        )
    layer = LayerParams(
        gate_logits=np.zeros((1, 16)),
        candidates=np.array([[[0, 9], [0, 1]]]),
        conn_weights=np.zeros((1, 2, 2)),
    )
    with pytest.raises(StructuralError):
        layer.validate(fan_in_width=4)  # candidate 9 out of range
    dup = LayerParams(
        gate_logits=np.zeros((1, 16)),
        candidates=np.array([[[2, 2], [0, 1]]]),
        conn_weights=np.zeros((1, 2, 2)),
    )
    with pytest.raises(StructuralError):
        dup.validate(fan_in_width=4)


def test_model_validate_group_divisibility():
    # 5 output gates cannot split into 2 class groups.
    with pytest.raises(StructuralError):
        random_network(4, [5], 2, candidates_per_slot=2, seed=0)
