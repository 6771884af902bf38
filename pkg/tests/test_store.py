"""Dataset storage: binary format round-trips, top-k ranking, quantization,
and patch extraction against independent oracles."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuromap.store import (
    DatasetHandle,
    NCAFError,
    NeuronRef,
    quantize,
)


def test_round_trip_three_layers(make_dataset):
    rng = np.random.default_rng(0)
    acts = {
        "a": rng.normal(size=(5, 3, 4, 4)).astype(np.float32),
        "b": rng.normal(size=(5, 2, 2, 2)).astype(np.float32),
        "c": rng.normal(size=(5, 4, 2, 2)).astype(np.float32),
    }
    handle = make_dataset(acts, connections=[("a", "b"), ("b", "c")])
    assert [s.layer_id for s in handle.layer_list] == ["a", "b", "c"]
    for lid, arr in acts.items():
        np.testing.assert_array_equal(np.asarray(handle.activations(lid)), arr)


def test_header_manifest_mismatch_names_layer(make_dataset, tmp_path):
    handle = make_dataset({"lay": np.zeros((2, 4, 2, 2), dtype=np.float32)})
    path = handle.root / "act_lay.bin"
    blob = bytearray(path.read_bytes())
    blob[4 + 4 : 4 + 8] = struct.pack("<I", 32)  # claim 32 channels
    path.write_bytes(bytes(blob))
    with pytest.raises(NCAFError, match="lay"):
        DatasetHandle(handle.root)


def test_empty_directory_reports_missing_manifest(tmp_path):
    with pytest.raises(NCAFError, match="manifest not found"):
        DatasetHandle(tmp_path)


def test_non_finite_values_rejected(make_dataset):
    bad = np.zeros((2, 1, 2, 2), dtype=np.float32)
    bad[1, 0, 1, 1] = np.nan
    with pytest.raises(NCAFError, match="bad.*non-finite|non-finite"):
        make_dataset({"bad": bad})


def test_missing_activation_file(make_dataset):
    handle = make_dataset({"gone": np.zeros((2, 1, 2, 2), dtype=np.float32)})
    (handle.root / "act_gone.bin").unlink()
    with pytest.raises(NCAFError, match="act_gone.bin"):
        DatasetHandle(handle.root)


class TestMaxActivation:
    def test_all_zero_map(self, make_dataset):
        handle = make_dataset({"l": np.zeros((1, 1, 3, 3), dtype=np.float32)})
        assert handle.max_activation(NeuronRef("l", 0), 0) == 0.0

    def test_single_entry(self, make_dataset):
        acts = np.zeros((1, 1, 3, 4), dtype=np.float32)
        acts[0, 0, 1, 2] = 3.5
        handle = make_dataset({"l": acts})
        assert handle.max_activation(NeuronRef("l", 0), 0) == pytest.approx(3.5)

    def test_matches_exhaustive_scan(self, make_dataset):
        rng = np.random.default_rng(7)
        acts = rng.normal(size=(3, 2, 4, 4)).astype(np.float32)
        handle = make_dataset({"l": acts})
        for image_id in range(3):
            for ch in range(2):
                expected = max(
                    float(acts[image_id, ch, r, c]) for r in range(4) for c in range(4)
                )
                assert handle.max_activation(NeuronRef("l", ch), image_id) == expected

    def test_out_of_range_ids(self, make_dataset):
        handle = make_dataset({"l": np.zeros((1, 1, 2, 2), dtype=np.float32)})
        with pytest.raises(IndexError):
            handle.max_activation(NeuronRef("l", 5), 0)
        with pytest.raises(IndexError):
            handle.max_activation(NeuronRef("l", 0), 9)
        with pytest.raises(KeyError):
            handle.max_activation(NeuronRef("nope", 0), 0)


class TestTopK:
    def _dataset_with_maxima(self, make_dataset, maxima):
        acts = np.zeros((len(maxima), 1, 2, 2), dtype=np.float32)
        for i, m in enumerate(maxima):
            acts[i, 0, 0, 0] = m
        return make_dataset({"l": acts})

    def test_basic_ranking(self, make_dataset):
        handle = self._dataset_with_maxima(make_dataset, [0.1, 0.9, 0.5])
        top = handle.top_k_images(NeuronRef("l", 0), 2)
        assert top.image_ids == [1, 2]
        assert top.max_activations == pytest.approx([0.9, 0.5])

    def test_ties_break_by_ascending_image_id(self, make_dataset):
        handle = self._dataset_with_maxima(make_dataset, [1.0] * 6)
        top = handle.top_k_images(NeuronRef("l", 0), 4)
        assert top.image_ids == [0, 1, 2, 3]

    def test_matches_full_sort_oracle(self, make_dataset):
        rng = np.random.default_rng(11)
        n = 500
        acts = rng.uniform(0, 1, size=(n, 1, 2, 2)).astype(np.float32)
        handle = make_dataset({"l": acts})
        top = handle.top_k_images(NeuronRef("l", 0), 200)
        maxima = [float(acts[i, 0].max()) for i in range(n)]
        oracle = sorted(range(n), key=lambda i: (-maxima[i], i))[:200]
        assert top.image_ids == oracle
        assert len(top.image_ids) == 200
        # non-increasing activations
        assert all(a >= b for a, b in zip(top.max_activations, top.max_activations[1:]))

    def test_k_larger_than_dataset(self, make_dataset):
        handle = self._dataset_with_maxima(make_dataset, [0.3, 0.1])
        top = handle.top_k_images(NeuronRef("l", 0), 50)
        assert len(top.image_ids) == 2


class TestQuantize:
    def test_examples(self):
        q = quantize(np.array([[0.0, 0.1], [-0.2, 5.0]]))
        assert q.tolist() == [[False, True], [False, True]]
        assert not quantize(np.zeros((3, 3))).any()

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(
            st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3),
            min_size=2,
            max_size=5,
        )
    )
    def test_elementwise_oracle(self, rows):
        values = np.array(rows)
        mask = quantize(values)
        for r in range(values.shape[0]):
            for c in range(values.shape[1]):
                assert mask[r, c] == (values[r, c] > 0)


def _oracle_regions(mask):
    """Independent connected-components via iterative flood fill on sets."""
    remaining = {(r, c) for r in range(mask.shape[0]) for c in range(mask.shape[1]) if mask[r, c]}
    regions = []
    while remaining:
        seed = min(remaining)
        stack, region = [seed], set()
        remaining.discard(seed)
        while stack:
            r, c = stack.pop()
            region.add((r, c))
            for nb in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
                if nb in remaining:
                    remaining.discard(nb)
                    stack.append(nb)
        regions.append(region)
    return regions


class TestExtractPatch:
    def test_single_cell_scales(self, make_dataset):
        acts = np.zeros((1, 1, 4, 4), dtype=np.float32)
        acts[0, 0, 1, 1] = 2.0
        handle = make_dataset({"l": acts}, pixel=(64, 64))
        patch = handle.extract_patch(NeuronRef("l", 0), 0)
        assert patch.bbox == (16, 16, 32, 32)

    def test_full_mask_covers_image(self, make_dataset):
        acts = np.ones((1, 1, 4, 4), dtype=np.float32)
        handle = make_dataset({"l": acts}, pixel=(64, 64))
        assert handle.extract_patch(NeuronRef("l", 0), 0).bbox == (0, 0, 64, 64)

    def test_largest_region_wins(self, make_dataset):
        acts = np.zeros((1, 1, 6, 6), dtype=np.float32)
        for r, c in [(0, 0), (0, 1), (1, 0)]:  # size 3
            acts[0, 0, r, c] = 1.0
        five = [(4, 3), (4, 4), (4, 5), (5, 4), (3, 4)]  # size 5
        for r, c in five:
            acts[0, 0, r, c] = 1.0
        handle = make_dataset({"l": acts}, pixel=(60, 60))
        regions = _oracle_regions(acts[0, 0] > 0)
        biggest = max(regions, key=len)
        assert len(biggest) == 5
        rows = [r for r, _ in biggest]
        cols = [c for _, c in biggest]
        expected = (
            min(rows) * 10,
            min(cols) * 10,
            (max(rows) + 1) * 10,
            (max(cols) + 1) * 10,
        )
        patch = handle.extract_patch(NeuronRef("l", 0), 0)
        assert patch.bbox == expected

    def test_empty_mask_is_an_error(self, make_dataset):
        handle = make_dataset({"l": np.zeros((1, 1, 4, 4), dtype=np.float32)})
        with pytest.raises(ValueError, match="no activated region"):
            handle.extract_patch(NeuronRef("l", 0), 0)

    def test_bbox_within_image(self, make_dataset):
        rng = np.random.default_rng(3)
        acts = rng.normal(size=(4, 2, 5, 7)).astype(np.float32)
        handle = make_dataset({"l": acts}, pixel=(50, 91))
        for image_id in range(4):
            for ch in range(2):
                patch = handle.extract_patch(NeuronRef("l", ch), image_id)
                r0, c0, r1, c1 = patch.bbox
                assert 0 <= r0 < r1 <= 50
                assert 0 <= c0 < c1 <= 91


def test_quantize_invariant_over_dataset(make_dataset):
    rng = np.random.default_rng(5)
    acts = rng.normal(size=(3, 2, 4, 4)).astype(np.float32)
    handle = make_dataset({"l": acts})
    for image_id in range(3):
        for ch in range(2):
            neuron = NeuronRef("l", ch)
            mask = handle.quantized_map(neuron, image_id)
            values = handle.activation_map(neuron, image_id)
            assert (mask == (values > 0)).all()
            assert handle.max_activation(neuron, image_id) >= values.max() - 1e-9


def test_neuron_ref_string_round_trip():
    ref = NeuronRef("block4_conv2", 460)
    assert str(ref) == "block4_conv2:460"
    assert NeuronRef.parse("block4_conv2:460") == ref
    with pytest.raises(ValueError):
        NeuronRef.parse("no-colon")
