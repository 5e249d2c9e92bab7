import math

import mpmath as mp
import numpy as np
import pytest

from hmglearn import autodiff as ad
from hmglearn.autodiff import backward, constant, zero_grads
from hmglearn.batching import MiniBatch, PretrainItem, generate_batches
from hmglearn.chem import load_brics_rules, path_fingerprint, parse_smiles
from hmglearn.contrastive import (
    NoNegatives,
    PretrainConfig,
    ViewProjections,
    batch_projections,
    evaluate_separation,
    pair_loss,
    pretrain,
    project,
    total_loss,
    view_pair_loss,
    write_trace,
)
from hmglearn.encoder import EncoderConfig, EncoderState, FeatureSchema, encode
from hmglearn.hmg import build_molecule_view
from hmglearn.chem import brics_fragment
from hmglearn.rng import stream


def make_zs(z_by_view):
    ids = {}
    z = {}
    for view, rows in z_by_view.items():
        ids[view] = [f"m{i}" for i in range(len(rows))]
        z[view] = constant(np.asarray(rows, dtype=float))
    return ViewProjections(ids=ids, z=z)


def make_zs_with_ids(z_by_view):
    ids = {view: list(rows.keys()) for view, rows in z_by_view.items()}
    z = {view: constant(np.stack(list(rows.values()))) for view, rows in z_by_view.items()}
    return ViewProjections(ids=ids, z=z)


# ---------------------------------------------------------------------------
# High-precision oracle for the per-anchor loss


def mp_cos(a, b):
    dot = mp.fsum(mp.mpf(float(x)) * mp.mpf(float(y)) for x, y in zip(a, b))
    na = mp.sqrt(mp.fsum(mp.mpf(float(x)) ** 2 for x in a))
    nb = mp.sqrt(mp.fsum(mp.mpf(float(x)) ** 2 for x in b))
    return dot / (na * nb)


def mp_pair_loss(z1, z2, i1, i2, tau):
    mp.mp.dps = 50
    tau = mp.mpf(tau)
    num = mp.e ** (mp_cos(z1[i1], z2[i2]) / tau)
    den = mp.fsum(
        mp.e ** (mp_cos(z1[i1], z1[j]) / tau) for j in range(len(z1)) if j != i1
    ) + mp.fsum(
        mp.e ** (mp_cos(z1[i1], z2[j]) / tau) for j in range(len(z2)) if j != i2
    )
    return float(-mp.log(num / den))


def test_all_identical_embeddings_closed_form():
    rows = np.tile([0.3, -0.7, 0.2], (4, 1))
    zs = make_zs({"M": rows, "EM": rows.copy()})
    for i in range(4):
        loss = pair_loss("M", "EM", f"m{i}", zs, tau=0.1)
        assert abs(float(loss.data) - math.log(6)) <= 1e-12


def test_orthogonal_negatives_closed_form():
    # N = M = 2, positive similarity 1, every negative similarity 0, tau 1:
    # loss = log 2 - 1.
    z1 = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])
    z2 = np.array([[1.0, 0, 0, 0], [0, 0, 1.0, 0]])
    zs = make_zs({"M": z1, "EM": z2})
    loss = pair_loss("M", "EM", "m0", zs, tau=1.0)
    assert abs(float(loss.data) - (math.log(2.0) - 1.0)) <= 1e-12


def test_single_pair_has_no_negatives():
    zs = make_zs({"M": [[1.0, 0.0]], "EM": [[0.5, 0.5]]})
    with pytest.raises(NoNegatives):
        pair_loss("M", "EM", "m0", zs, tau=0.5)


@pytest.mark.parametrize("seed", range(25))
def test_pair_loss_matches_high_precision_oracle(seed):
    rng = stream(seed, "loss-fuzz")
    n, m, d = 6, 3, 5
    z_m = rng.uniform(-2, 2, (n, d))
    z_dm = rng.uniform(-2, 2, (m, d))
    ids_m = [f"m{i}" for i in range(n)]
    ids_dm = ids_m[n - m :]  # drug items are the batch tail
    zs = ViewProjections(ids={"M": ids_m, "DM": ids_dm},
                         z={"M": constant(z_m), "DM": constant(z_dm)})
    tau = 0.1
    for j, mol_id in enumerate(ids_dm):
        i1 = ids_m.index(mol_id)
        got = float(pair_loss("M", "DM", mol_id, zs, tau).data)
        want = mp_pair_loss(z_m, z_dm, i1, j, tau)
        assert abs(got - want) <= 1e-10 * max(1.0, abs(want))
        got_rev = float(pair_loss("DM", "M", mol_id, zs, tau).data)
        want_rev = mp_pair_loss(z_dm, z_m, j, i1, tau)
        assert abs(got_rev - want_rev) <= 1e-10 * max(1.0, abs(want_rev))


def test_view_pair_loss_symmetric_case():
    rng = stream(3, "sym")
    rows = rng.uniform(-1, 1, (5, 4))
    zs = make_zs({"M": rows, "EM": rows.copy()})
    forward = [float(pair_loss("M", "EM", f"m{i}", zs, 0.2).data) for i in range(5)]
    reverse = [float(pair_loss("EM", "M", f"m{i}", zs, 0.2).data) for i in range(5)]
    assert np.allclose(forward, reverse, atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_view_pair_loss_matches_direct_evaluation(seed):
    rng = stream(seed, "vpl")
    n, m = 5, 3
    z1 = rng.uniform(-1, 1, (n, 4))
    z2 = rng.uniform(-1, 1, (m, 4))
    ids1 = [f"m{i}" for i in range(n)]
    ids2 = ids1[n - m :]
    zs = ViewProjections(ids={"M": ids1, "DM": ids2},
                         z={"M": constant(z1), "DM": constant(z2)})
    got = float(view_pair_loss("M", "DM", zs, 0.1).data)
    want = 0.0
    for j, mol_id in enumerate(ids2):
        i1 = ids1.index(mol_id)
        want += mp_pair_loss(z1, z2, i1, j, 0.1)
        want += mp_pair_loss(z2, z1, j, i1, 0.1)
    want /= m
    assert abs(got - want) <= 1e-10 * max(1.0, abs(want))


def test_loss_invariant_under_positive_scaling_and_rotation():
    rng = stream(8, "scale")
    z1 = rng.uniform(-1, 1, (4, 4))
    z2 = rng.uniform(-1, 1, (4, 4))
    base = float(view_pair_loss("M", "EM", make_zs({"M": z1, "EM": z2}), 0.3).data)
    scaled = float(view_pair_loss("M", "EM", make_zs({"M": 3.7 * z1, "EM": 0.4 * z2}), 0.3).data)
    assert abs(base - scaled) <= 1e-9
    # A global rotation applied to every projection leaves cosines unchanged.
    raw = rng.uniform(-1, 1, (4, 4))
    q, _ = np.linalg.qr(raw)
    rotated = float(view_pair_loss("M", "EM", make_zs({"M": z1 @ q, "EM": z2 @ q}), 0.3).data)
    assert abs(base - rotated) <= 1e-9


def test_total_loss_requires_drug_views():
    rng = stream(1, "tl")
    rows = rng.uniform(-1, 1, (4, 3))
    zs = make_zs({"M": rows, "EM": rows})
    with pytest.raises(NoNegatives):
        total_loss(zs, 0.1)


def test_total_loss_all_identical_closed_form():
    n, drug_count = 10, 3
    row = np.array([0.5, -0.5, 1.0])
    ids = [f"m{i}" for i in range(n)]
    zs = ViewProjections(
        ids={"M": ids, "EM": ids, "DM": ids[n - drug_count :]},
        z={
            "M": constant(np.tile(row, (n, 1))),
            "EM": constant(np.tile(row, (n, 1))),
            "DM": constant(np.tile(row, (drug_count, 1))),
        },
    )
    total, components = total_loss(zs, 0.1)
    # Every anchor of a pairing with view sizes (a, b) contributes
    # log(a + b - 2); both directions contribute equally.
    expected_m_em = math.log(n + n - 2)
    expected_mixed = math.log(n + drug_count - 2)
    assert abs(float(components["M,EM"].data) - 2 * expected_m_em) <= 1e-10
    assert abs(float(components["M,DM"].data) - 2 * expected_mixed) <= 1e-10
    assert abs(float(components["EM,DM"].data) - 2 * expected_mixed) <= 1e-10
    assert abs(float(total.data)
               - (2 * expected_m_em + 4 * expected_mixed)) <= 1e-10


def test_projector_shapes_and_zero_weight_bias():
    cfg = EncoderConfig(d=8, layers=1, heads=2, k_pe=2, seed=0)
    state = EncoderState(cfg, FeatureSchema.default(), d_z=4)
    state["proj.W1"].data[:] = 0.0
    state["proj.W2"].data[:] = 0.0
    z = project(constant(np.ones(8)), state)
    assert z.data.shape == (1, 4)
    assert np.allclose(z.data[0], state["proj.b2"].data)


def test_projector_matches_direct_evaluation():
    cfg = EncoderConfig(d=8, layers=1, heads=2, k_pe=2, seed=3)
    state = EncoderState(cfg, FeatureSchema.default(), d_z=4)
    h = stream(5, "proj").uniform(-1, 1, 8)
    z = project(constant(h), state).data[0]
    hidden = h @ state["proj.W1"].data + state["proj.b1"].data
    hidden = np.where(hidden >= 0, hidden, cfg.leaky_slope * hidden)
    want = hidden @ state["proj.W2"].data + state["proj.b2"].data
    assert np.allclose(z, want, atol=1e-12)


# ---------------------------------------------------------------------------
# End-to-end gradient and training smoke


RULES = load_brics_rules()


def tiny_items(smiles_list, drug_tags, seed=0, k_pe=2):
    from hmglearn.kg import EmbeddingTable
    from hmglearn.hmg import build_drug_view

    rng = stream(seed, "item-emb")
    emb = EmbeddingTable(dim=6, vectors={
        f"DRG{i}": rng.uniform(-1, 1, 6) for i in range(len(smiles_list))
    })
    items = []
    for i, (smiles, is_drug) in enumerate(zip(smiles_list, drug_tags)):
        mol = parse_smiles(smiles)
        base = build_molecule_view(mol, brics_fragment(mol, RULES), k_pe=k_pe)
        views = {"M": base, "EM": base}  # toy: reuse M as the element view
        if is_drug:
            views["DM"] = build_drug_view(base, None, emb, f"DRG{i}")
        items.append(PretrainItem(
            mol_id=f"m{i}", smiles=smiles,
            drug_id=f"DRG{i}" if is_drug else None,
            fingerprint=path_fingerprint(mol), views=views,
        ))
    return items


def test_total_loss_gradient_matches_finite_differences():
    cfg = EncoderConfig(d=8, layers=1, heads=2, k_pe=2, seed=1)
    state = EncoderState(cfg, FeatureSchema.default(), d_z=4)
    items = tiny_items(["CCO", "CCN", "CC"], [True, True, False], seed=2)
    batch = MiniBatch(items=items, drug_count=2)

    def loss_fn():
        zs = batch_projections(batch, state)
        return total_loss(zs, tau=0.5)[0]

    report = ad.grad_check(loss_fn, state.parameters(), eps=1e-5, tol=1e-4,
                           max_coords_per_group=40,
                           rng=np.random.default_rng(0))
    assert report.ok, report.max_rel_err


def test_pretrain_smoke_deterministic(tmp_path):
    cfg = EncoderConfig(d=8, layers=1, heads=2, k_pe=2, seed=4)
    smiles = ["CCO", "CCN", "CC", "CCC", "CCS", "CNC", "CCCO", "CCCN",
              "COC", "CC(C)C", "OCCO", "NCCN"]
    drug_tags = [True] * 4 + [False] * 8
    items = tiny_items(smiles, drug_tags, seed=5)
    pconf = PretrainConfig(batch_size=6, complement=1, tau=0.2, epochs=2,
                           step_size=1e-3, seed=9, max_steps=4)

    def run():
        state = EncoderState(cfg, FeatureSchema.default(), d_z=4)
        result = pretrain(items, state, pconf)
        return result

    r1, r2 = run(), run()
    assert [row["loss_total"] for row in r1.trace] == [row["loss_total"] for row in r2.trace]
    assert len(r1.trace) == 4
    assert r1.trace[0]["step"] == 1
    path = tmp_path / "trace.csv"
    write_trace(path, r1.trace)
    lines = path.read_text().splitlines()
    assert lines[0] == "step,loss_total,loss_M_EM,loss_M_DM,loss_EM_DM"
    assert len(lines) == 5


def test_evaluate_separation_reports_both_means():
    cfg = EncoderConfig(d=8, layers=1, heads=2, k_pe=2, seed=6)
    state = EncoderState(cfg, FeatureSchema.default(), d_z=4)
    items = tiny_items(["CCO", "CCN", "CC"], [True, False, False], seed=7)
    pos, neg = evaluate_separation(items, state)
    assert math.isfinite(pos) and math.isfinite(neg)
    assert -1.0 <= pos <= 1.0 and -1.0 <= neg <= 1.0
