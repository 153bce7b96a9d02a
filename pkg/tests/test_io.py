'''
Tests for dataset files and the binary artifact formats.
'''

import numpy as np
import pytest

from core.config import SynthConfig
from core.errors import DatasetFormatError
from core.storage import load_codes, load_layer, load_proxies, save_codes, save_layer, save_proxies
from features.io import FEATURE_HEADER, export_dataset, ingest, read_features, read_labels, read_split, read_tags, write_features
from features.synthetic import synth_generate
from hashing.layer import HashingLayer
from proxies.design import random_binary_proxies, random_proxies
from retrieval.codes import BinaryCodeDatabase


@pytest.fixture
def features():
    return np.random.default_rng(0).standard_normal((5, 3)).astype(np.float32)

# -------------------------------------------------------------------------------------------------
# Features
# -------------------------------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["f.pf", "f.csv"])
def test_feature_formats(tmp_path, features, name):
    write_features(features, tmp_path / name)
    np.testing.assert_array_equal(read_features(tmp_path / name), features)


def test_binary_header_layout(tmp_path, features):
    write_features(features, tmp_path / "f.pf")
    raw = (tmp_path / "f.pf").read_bytes()
    assert raw[:4] == b"PFTR"
    assert FEATURE_HEADER.itemsize == 20
    assert len(raw) == 20 + 4 * 15


def test_truncated_features_report_offset(tmp_path, features):
    write_features(features, tmp_path / "f.pf")
    raw = (tmp_path / "f.pf").read_bytes()
    (tmp_path / "f.pf").write_bytes(raw[:-6])
    with pytest.raises(DatasetFormatError) as info:
        read_features(tmp_path / "f.pf")
    assert info.value.offset == len(raw) - 6


def test_bad_magic(tmp_path, features):
    write_features(features, tmp_path / "f.pf")
    raw = bytearray((tmp_path / "f.pf").read_bytes())
    raw[:4] = b"XXXX"
    (tmp_path / "f.pf").write_bytes(bytes(raw))
    with pytest.raises(DatasetFormatError, match="magic"):
        read_features(tmp_path / "f.pf")


def test_csv_gap_points_at_line(tmp_path):
    (tmp_path / "f.csv").write_text("1,2\n3,\n")
    with pytest.raises(DatasetFormatError) as info:
        read_features(tmp_path / "f.csv")
    assert info.value.line == 2


def test_missing_file(tmp_path):
    with pytest.raises(DatasetFormatError, match="not found"):
        read_features(tmp_path / "nope.pf")

# -------------------------------------------------------------------------------------------------
# Labels, tags, splits
# -------------------------------------------------------------------------------------------------

def test_labels_are_one_based_on_disk(tmp_path):
    (tmp_path / "y.lbl").write_text("1\n3\n2\n\n")
    np.testing.assert_array_equal(read_labels(tmp_path / "y.lbl"), [0, 2, 1])


@pytest.mark.parametrize("text, line", [("1\nx\n", 2), ("1\n0\n", 2), ("2\n1\n9\n", 3)])
def test_bad_labels_point_at_line(tmp_path, text, line):
    (tmp_path / "y.lbl").write_text(text)
    with pytest.raises(DatasetFormatError) as info:
        read_labels(tmp_path / "y.lbl", num_classes=4)
    assert info.value.line == line


def test_label_count_must_match(tmp_path):
    (tmp_path / "y.lbl").write_text("1\n2\n")
    with pytest.raises(DatasetFormatError, match="2 rows for 3"):
        read_labels(tmp_path / "y.lbl", n=3)


def test_tags(tmp_path):
    (tmp_path / "t.tags").write_text("1 0 1\n0 1 0\n")
    np.testing.assert_array_equal(read_tags(tmp_path / "t.tags"), [[1, 0, 1], [0, 1, 0]])


@pytest.mark.parametrize("text, line", [("1 0\n0 0\n", 2), ("1 0\n1 2\n", 2), ("1 0\n1\n", 2)])
def test_bad_tags_point_at_line(tmp_path, text, line):
    (tmp_path / "t.tags").write_text(text)
    with pytest.raises(DatasetFormatError) as info:
        read_tags(tmp_path / "t.tags")
    assert info.value.line == line


def test_unknown_split(tmp_path):
    (tmp_path / "s.split").write_text("train\nquery\ntest\n")
    with pytest.raises(DatasetFormatError, match="test"):
        read_split(tmp_path / "s.split")

# -------------------------------------------------------------------------------------------------
# Ingest / export
# -------------------------------------------------------------------------------------------------

@pytest.mark.parametrize("multilabel", [False, True])
def test_export_then_ingest(tmp_path, multilabel):
    data = synth_generate(SynthConfig(superclasses=2, classes_per_superclass=2, samples_per_class=5, feature_dim=4,
                                      multilabel=multilabel, seed=0))
    payload = tmp_path / ("d.tags" if multilabel else "d.lbl")
    export_dataset(data, tmp_path / "d.pf", payload, tmp_path / "d.split")
    loaded = ingest(tmp_path / "d.pf", tags_path=payload if multilabel else None,
                    labels_path=None if multilabel else payload, split_path=tmp_path / "d.split")
    np.testing.assert_array_equal(loaded.features, data.features)
    np.testing.assert_array_equal(loaded.payload, data.payload)
    np.testing.assert_array_equal(loaded.split, data.split)


def test_ingest_needs_exactly_one_payload(tmp_path, features):
    write_features(features, tmp_path / "f.pf")
    with pytest.raises(DatasetFormatError, match="exactly one"):
        ingest(tmp_path / "f.pf")

# -------------------------------------------------------------------------------------------------
# Artifacts
# -------------------------------------------------------------------------------------------------

def test_proxies_keep_class_order(tmp_path):
    p = random_proxies(4, 3, seed=1).with_assignment(np.array([2, 0, 3, 1]))
    save_proxies(p, tmp_path / "p.phpx")
    loaded = load_proxies(tmp_path / "p.phpx")
    np.testing.assert_array_equal(loaded.matrix, p.matrix)
    assert loaded.kind == "random"


def test_layer_file(tmp_path):
    proxies = random_binary_proxies(3, 4, seed=0)
    layer = HashingLayer(L=np.arange(20.0).reshape(5, 4), bias=np.ones(4), proxies=proxies)
    save_layer(layer, tmp_path / "m.phly")
    loaded = load_layer(tmp_path / "m.phly")
    np.testing.assert_array_equal(loaded.L, layer.L)
    np.testing.assert_array_equal(loaded.bias, layer.bias)
    np.testing.assert_array_equal(loaded.proxies.W, proxies.W)


def test_layer_trailing_bytes(tmp_path):
    layer = HashingLayer(L=np.zeros((2, 4)), bias=np.zeros(4), proxies=random_binary_proxies(2, 4))
    save_layer(layer, tmp_path / "m.phly")
    with open(tmp_path / "m.phly", "ab") as handle:
        handle.write(b"\0")
    with pytest.raises(DatasetFormatError, match="trailing"):
        load_layer(tmp_path / "m.phly")


def test_wrong_magic_is_named(tmp_path):
    save_proxies(random_proxies(2, 2), tmp_path / "p.phpx")
    with pytest.raises(DatasetFormatError, match="PHLY"):
        load_layer(tmp_path / "p.phpx")


@pytest.mark.parametrize("payload", ["labels", "tags"])
def test_codes_with_sidecar(tmp_path, payload):
    bits = np.random.default_rng(2).random((6, 70)) < 0.5
    extra = {"labels": np.arange(6) % 3} if payload == "labels" else {"tags": np.eye(6, 2, dtype=np.uint8) + np.eye(6, 2, k=-2, dtype=np.uint8) + np.eye(6, 2, k=-4, dtype=np.uint8)}
    db = BinaryCodeDatabase.from_bits(bits, **extra)
    save_codes(db, tmp_path / "c.phsh")
    assert (tmp_path / f"c.phsh.{payload}").exists()
    loaded = load_codes(tmp_path / "c.phsh")
    np.testing.assert_array_equal(loaded.words, db.words)
    np.testing.assert_array_equal(loaded.payload, db.payload)


def test_codes_without_payload(tmp_path):
    db = BinaryCodeDatabase.from_bits(np.ones((2, 8), dtype=bool))
    save_codes(db, tmp_path / "c.phsh")
    assert load_codes(tmp_path / "c.phsh").payload is None
