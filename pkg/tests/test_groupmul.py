import json

import numpy as np
import pytest

from cabench.groupmul import (
    GROUP_NAMES,
    _compose,
    _even_permutations,
    generate_groupmul_dataset,
    make_group,
    prefix_labels,
    read_group_samples,
    score_groupmul,
)


@pytest.fixture(scope="module", params=GROUP_NAMES)
def group(request):
    return make_group(request.param)


class TestGroupAxioms:
    def test_order_and_closure(self, group):
        assert group.order == 60
        assert group.table.min() >= 0 and group.table.max() < 60

    def test_identity(self, group):
        e = group.identity
        for a in range(60):
            assert group.mul(e, a) == a
            assert group.mul(a, e) == a

    def test_inverses(self, group):
        for a in range(60):
            inv = group.inverse(a)
            assert group.mul(a, inv) == group.identity
            assert group.mul(inv, a) == group.identity

    def test_cancellation(self, group):
        # every row and column of the table is a permutation of the elements
        for a in range(60):
            assert sorted(group.table[a].tolist()) == list(range(60))
            assert sorted(group.table[:, a].tolist()) == list(range(60))

    def test_associativity_sampled(self, group):
        rng = np.random.default_rng(5)
        t = group.table
        a, b, c = rng.integers(0, 60, size=(3, 10_000))
        assert np.array_equal(t[t[a, b], c], t[a, t[b, c]])


class TestSpecificGroups:
    def test_z60_is_addition(self):
        g = make_group("z60")
        assert g.mul(5, 7) == 12
        assert g.mul(59, 1) == 0
        assert g.identity == 0

    def test_a5_enumeration(self):
        g = make_group("a5")
        perms = _even_permutations(5)
        assert len(perms) == 60
        assert perms == sorted(perms)  # lexicographic rank order
        assert g.element_labels[g.identity] == "01234"

    def test_a5_matches_direct_composition(self):
        g = make_group("a5")
        perms = _even_permutations(5)
        rng = np.random.default_rng(9)
        for _ in range(500):
            a, b = int(rng.integers(0, 60)), int(rng.integers(0, 60))
            composed = tuple(perms[a][perms[b][x]] for x in range(5))
            assert perms[g.mul(a, b)] == composed

    def test_a4xz5_componentwise(self):
        g = make_group("a4xz5")
        perms4 = _even_permutations(4)
        rng = np.random.default_rng(13)
        for _ in range(500):
            a, b = int(rng.integers(0, 60)), int(rng.integers(0, 60))
            pa, za = divmod(a, 5)
            pb, zb = divmod(b, 5)
            c = g.mul(a, b)
            pc, zc = divmod(c, 5)
            assert perms4[pc] == _compose(perms4[pa], perms4[pb])
            assert zc == (za + zb) % 5

    def test_even_permutation_parity(self):
        for p in _even_permutations(4):
            inv = sum(1 for i in range(4) for j in range(i + 1, 4) if p[i] > p[j])
            assert inv % 2 == 0
        assert len(_even_permutations(4)) == 12

    def test_unknown_group(self):
        with pytest.raises(ValueError):
            make_group("s5")


class TestPrefixLabels:
    def test_z60_running_sums(self):
        g = make_group("z60")
        assert prefix_labels([5, 7, 10], g) == (5, 12, 22)
        assert prefix_labels([59, 2], g) == (59, 1)

    def test_identity_sequence(self, group):
        e = group.identity
        assert prefix_labels([e] * 8, group) == (e,) * 8

    def test_matches_independent_recomposition(self):
        g = make_group("a5")
        rng = np.random.default_rng(21)
        for _ in range(200):
            seq = [int(v) for v in rng.integers(0, 60, size=10)]
            labels = prefix_labels(seq, g)
            for i in range(10):
                acc = seq[0]
                for j in range(1, i + 1):
                    acc = g.mul(acc, seq[j])
                assert labels[i] == acc

    def test_streaming_equals_batch(self, group):
        rng = np.random.default_rng(23)
        seq = [int(v) for v in rng.integers(0, 60, size=40)]
        full = prefix_labels(seq, group)
        for i in range(1, 41):
            assert prefix_labels(seq[:i], group) == full[:i]

    def test_z60_order_invariant_a5_not(self):
        z, a5 = make_group("z60"), make_group("a5")
        rng = np.random.default_rng(31)
        seq = [int(v) for v in rng.integers(0, 60, size=12)]
        shuffled = list(reversed(seq))
        assert prefix_labels(seq, z)[-1] == prefix_labels(shuffled, z)[-1]
        # concrete non-abelian witness: two elements that do not commute
        found = False
        for a in range(60):
            for b in range(60):
                if a5.mul(a, b) != a5.mul(b, a):
                    assert prefix_labels([a, b], a5)[-1] != prefix_labels([b, a], a5)[-1]
                    found = True
                    break
            if found:
                break
        assert found

    def test_invalid_id(self, group):
        with pytest.raises(ValueError):
            prefix_labels([0, 60], group)


class TestDataset:
    def test_generation_counts_and_labels(self, tmp_path):
        g = make_group("a5")
        manifest = generate_groupmul_dataset(
            g, tmp_path, lengths=(5, 10), n_per_length=50, master_seed=3
        )
        assert manifest["files"]["samples.jsonl"]["records"] == 100
        samples = list(read_group_samples(tmp_path / "samples.jsonl"))
        assert len(samples) == 100
        assert {len(s.seq) for s in samples} == {5, 10}
        for s in samples[:20]:
            assert prefix_labels(s.seq, g) == s.labels

    def test_deterministic_bytes(self, tmp_path):
        g = make_group("z60")
        generate_groupmul_dataset(g, tmp_path / "a", lengths=(5,), n_per_length=30, master_seed=7)
        generate_groupmul_dataset(g, tmp_path / "b", lengths=(5,), n_per_length=30, master_seed=7)
        assert (tmp_path / "a/samples.jsonl").read_bytes() == (tmp_path / "b/samples.jsonl").read_bytes()
        assert (tmp_path / "a/manifest.json").read_bytes() == (tmp_path / "b/manifest.json").read_bytes()
        generate_groupmul_dataset(g, tmp_path / "c", lengths=(5,), n_per_length=30, master_seed=8)
        assert (tmp_path / "a/samples.jsonl").read_bytes() != (tmp_path / "c/samples.jsonl").read_bytes()

    def test_empty_dataset(self, tmp_path):
        g = make_group("z60")
        manifest = generate_groupmul_dataset(g, tmp_path, lengths=(5,), n_per_length=0)
        assert manifest["files"]["samples.jsonl"]["records"] == 0
        assert (tmp_path / "samples.jsonl").read_bytes() == b""

    def test_manifest_embeds_table_digest(self, tmp_path):
        g = make_group("a4xz5")
        manifest = generate_groupmul_dataset(g, tmp_path, lengths=(5,), n_per_length=5)
        assert manifest["group"]["table_sha256"] == g.table_sha256()
        assert "left fold" in manifest["group"]["product_orientation"]

    def test_uniform_sampling(self, tmp_path):
        g = make_group("z60")
        generate_groupmul_dataset(g, tmp_path, lengths=(40,), n_per_length=2000, master_seed=11)
        vals = np.concatenate(
            [np.array(s.seq) for s in read_group_samples(tmp_path / "samples.jsonl")]
        )
        counts = np.bincount(vals, minlength=60)
        chi2 = float(((counts - vals.size / 60) ** 2 / (vals.size / 60)).sum())
        assert chi2 < 150  # 59 dof, >8 sigma bound


class TestScoring:
    def _write_preds(self, path, labels_list):
        with open(path, "w") as f:
            for labels in labels_list:
                f.write(json.dumps({"labels": list(labels)}) + "\n")

    def test_perfect_predictions(self, tmp_path):
        g = make_group("z60")
        generate_groupmul_dataset(g, tmp_path, lengths=(5, 10), n_per_length=20, master_seed=1)
        gold = tmp_path / "samples.jsonl"
        pred = tmp_path / "pred.jsonl"
        self._write_preds(pred, [s.labels for s in read_group_samples(gold)])
        rep = score_groupmul(pred, gold)
        assert rep["overall_position_accuracy"] == 1.0
        assert rep["all_lengths_pass"]
        for cell in rep["per_length"].values():
            assert cell["position_accuracy"] == 1.0
            assert cell["sequence_accuracy"] == 1.0

    def test_constant_identity_is_chance_level(self, tmp_path):
        g = make_group("z60")
        generate_groupmul_dataset(g, tmp_path, lengths=(40,), n_per_length=500, master_seed=2)
        gold = tmp_path / "samples.jsonl"
        pred = tmp_path / "pred.jsonl"
        self._write_preds(pred, [[g.identity] * 40] * 500)
        rep = score_groupmul(pred, gold)
        acc = rep["overall_position_accuracy"]
        assert abs(acc - 1 / 60) < 0.01
        assert not rep["all_lengths_pass"]

    def test_threshold_boundary_inclusive(self, tmp_path):
        g = make_group("z60")
        generate_groupmul_dataset(g, tmp_path, lengths=(10,), n_per_length=10, master_seed=4)
        gold = tmp_path / "samples.jsonl"
        samples = list(read_group_samples(gold))
        # corrupt exactly 30% of positions: 3 per 10-label sequence
        preds = []
        for s in samples:
            p = list(s.labels)
            for i in range(3):
                p[i] = (p[i] + 1) % 60
            preds.append(p)
        pred = tmp_path / "pred.jsonl"
        self._write_preds(pred, preds)
        rep = score_groupmul(pred, gold, threshold=0.70)
        cell = rep["per_length"]["10"]
        assert cell["position_accuracy"] == pytest.approx(0.70)
        assert cell["pass"]  # >= semantics at the boundary

    def test_alignment_errors(self, tmp_path):
        g = make_group("z60")
        generate_groupmul_dataset(g, tmp_path, lengths=(5,), n_per_length=3, master_seed=5)
        gold = tmp_path / "samples.jsonl"
        pred = tmp_path / "pred.jsonl"
        self._write_preds(pred, [[0] * 5, [0] * 5])
        with pytest.raises(ValueError, match="record counts differ"):
            score_groupmul(pred, gold)
        self._write_preds(pred, [[0] * 5, [0] * 4, [0] * 5])
        with pytest.raises(ValueError, match="labels"):
            score_groupmul(pred, gold)
