import numpy as np
import pytest

from tsvshield.bench_io import load_bundled
from tsvshield.config import EngineConfig
from tsvshield.floorplan import (
    LayoutEncoding, Problem, anneal, choose_levels, decode, evaluate, evaluate_layout,
    initial_encoding, mode_weights, propose, unit_norms,
)
from tsvshield.model import BlockModule, DomainError, Net, overlap_area

CFG = EngineConfig(grid_nx=16, grid_ny=16, est_grid=16)


def hard(bid, w, h, p=0.1):
    return BlockModule(bid, "hard", w * h, (w / h, w / h), (0.0, 0.0), (w, h), 1, p)


def tiny_problem(blocks, nets=(), outline=(1000.0, 1000.0)):
    return Problem(blocks, (), nets, CFG, outline)


def encoding(prob, seq_p, seq_m):
    w = np.array([b.dims[0] for b in prob.blocks])
    h = np.array([b.dims[1] for b in prob.blocks])
    return LayoutEncoding(seq_p, seq_m, w, h, w / h)


@pytest.fixture(scope="module")
def toy():
    return load_bundled("toy30")


# -- decoding

def test_single_block_per_die_sits_at_origin():
    prob = tiny_problem([hard("a", 100, 50), hard("b", 80, 80)])
    lay = decode(encoding(prob, ([0], [1]), ([0], [1])), prob)
    assert lay.x.tolist() == [0.0, 0.0] and lay.y.tolist() == [0.0, 0.0]
    assert lay.die.tolist() == [1, 2]


def test_same_order_in_both_sequences_means_left_of():
    prob = tiny_problem([hard("a", 100, 50), hard("b", 80, 80)])
    lay = decode(encoding(prob, ([0, 1], []), ([0, 1], [])), prob)
    assert (lay.x[1], lay.y[1]) == (100.0, 0.0)
    lay = decode(encoding(prob, ([1, 0], []), ([0, 1], [])), prob)
    assert (lay.x[1], lay.y[1]) == (0.0, 50.0)


def test_random_encodings_never_overlap(toy):
    prob = Problem.from_bundle(toy, CFG)
    rng = np.random.default_rng(3)
    for _ in range(10):
        enc = initial_encoding(prob, rng)
        for _ in range(20):
            enc = propose(enc, prob, rng, 0.0, np.zeros(prob.n, bool)) or enc
        enc.validate(prob.n)
        lay = decode(enc, prob)
        r = lay.rects
        for d in (1, 2):
            idx = np.flatnonzero(lay.die == d)
            for i in idx:
                assert r[i, 0] >= 0 and r[i, 1] >= 0
                for j in idx[idx > i]:
                    assert overlap_area(r[i], r[j]) <= 1e-6


def test_validate_rejects_duplicates():
    prob = tiny_problem([hard("a", 10, 10), hard("b", 10, 10)])
    with pytest.raises(DomainError):
        encoding(prob, ([0, 1], [1]), ([0, 1], [1])).validate(2)
    with pytest.raises(DomainError):
        encoding(prob, ([0], [1]), ([1], [0])).validate(2)


def test_cross_die_net_gets_one_signal_tsv():
    blocks = [hard("a", 100, 100), hard("b", 100, 100), hard("c", 100, 100)]
    nets = [Net("n0", ("a", "b")), Net("n1", ("a", "c"))]
    prob = tiny_problem(blocks, nets)
    lay = decode(encoding(prob, ([0, 1], [2]), ([0, 1], [2])), prob)
    assert len(lay.tsv_xy) == 1 and lay.tsv_unplaced == 0


# -- evaluation

def test_pa_and_tsc_share_classical_terms(toy):
    prob = Problem.from_bundle(toy, CFG)
    enc = initial_encoding(prob, np.random.default_rng(1))
    lay = decode(enc, prob)
    lev, _ = choose_levels(prob, lay, "pa", 10.0)
    a = evaluate_layout(prob, lay, lev, "pa", unit_norms(), 10.0)
    b = evaluate_layout(prob, lay, lev, "tsc", unit_norms(), 10.0)
    assert a.terms == b.terms
    assert a.classical == pytest.approx(b.classical)
    assert mode_weights(CFG, "pa")["corr"] == 0.0 and mode_weights(CFG, "tsc")["corr"] > 0
    with pytest.raises(DomainError):
        mode_weights(CFG, "xx")


def test_power_term_follows_voltage_levels(toy):
    prob = Problem.from_bundle(toy, CFG)
    lay = decode(initial_encoding(prob, np.random.default_rng(2)), prob)
    powers = [evaluate_layout(prob, lay, np.full(prob.n, k), "pa", unit_norms(), 10.0).terms["power"]
              for k in range(3)]
    assert powers[0] < powers[1] < powers[2]
    assert powers[1] == pytest.approx(prob.power.sum())


def test_evaluate_on_finished_floorplan(toy):
    res = anneal(toy, CFG, "pa", seed=4, moves=0, harden_final=False)
    c = evaluate(res.floorplan, "pa", CFG)
    assert c.legal == res.floorplan.is_legal()
    assert c.terms["power"] == pytest.approx(res.report.power)


# -- annealing

def test_zero_moves_is_deterministic_initial_solution(toy):
    a = anneal(toy, CFG, "tsc", seed=5, moves=0)
    b = anneal(toy, CFG, "tsc", seed=5, moves=0)
    assert a.report.moves == 0 and a.report.accepted == 0
    assert a.floorplan == b.floorplan


def test_same_seed_same_result(toy):
    a = anneal(toy, CFG, "tsc", seed=6, moves=60)
    b = anneal(toy, CFG, "tsc", seed=6, moves=60)
    da, db = a.report.as_dict(), b.report.as_dict()
    da.pop("runtime_s")
    db.pop("runtime_s")
    assert da == db and a.floorplan == b.floorplan


def test_anneal_result_is_legal_and_consistent(toy):
    res = anneal(toy, CFG, "tsc", seed=7, moves=120)
    rep = res.report
    assert rep.legal and res.floorplan.is_legal()
    assert rep.moves == 120 and 0 <= rep.accepted <= rep.moves
    assert rep.signal_tsvs == res.floorplan.signal_tsv_count()
    assert rep.dummy_tsvs <= CFG.harden_tsv_budget * rep.signal_tsvs
    assert rep.volumes == len(res.floorplan.volumes) >= 1
    assert rep.r1 == rep.correlation_r1 and rep.s2 == rep.entropy_s2
    ids = sorted(b.id for b in res.floorplan.blocks)
    assert ids == sorted(b.id for b in toy.blocks)
    assert rep.critical_delay <= rep.clock * (1 + 1e-9)


def test_unknown_mode(toy):
    with pytest.raises(DomainError):
        anneal(toy, CFG, "both", seed=0, moves=0)
