import gzip
import struct

import numpy as np
import pytest

from fairrobust.data import (DataFormatError, LabeledDataset, MixtureSampleConfig, load_csv,
                             load_idx, sample_mixture, save_csv, write_idx)
from fairrobust.population import GaussianMixtureSpec

SPEC5 = GaussianMixtureSpec(-1.0, 1.0, 5.0)


def test_dataset_invariants():
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((0, 2)), [], [], 2, 2)
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((2, 2)), [0, 0], [0, 2], 2, 2)
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((2, 2)), [0, 3], [0, 1], 2, 2)
    ds = LabeledDataset(np.zeros((5, 1)), [0, 1, 0, 1, 1], [0, 0, 1, 1, 1], 2, 2)
    idx = ds.group_indices()
    assert sorted(np.concatenate(list(idx.values())).tolist()) == list(range(5))


@pytest.mark.slow
def test_sample_mixture_moments():
    n = 1_000_000
    ds = sample_mixture(MixtureSampleConfig(SPEC5, n, seed=0))
    neg = ds.features[ds.labels == 0, 0]
    pos = ds.features[ds.labels == 1, 0]
    assert abs(neg.mean() + 1) <= 4 / np.sqrt(n)
    assert abs(pos.var() / 25 - 1) <= 0.05


def test_sample_mixture_contract():
    cfg = MixtureSampleConfig(SPEC5, 2000, seed=3, dims=4)
    a, b = sample_mixture(cfg), sample_mixture(cfg)
    assert a.features.shape == (2000, 4)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.groups, a.labels)
    noise = a.features[:, 1:]
    assert abs(noise.mean()) < 0.05 and abs(noise.std() - 1) < 0.05
    with pytest.raises(ValueError):
        MixtureSampleConfig(SPEC5, 10, dims=0)


def test_csv_roundtrip_and_dense_codes(tmp_path):
    p = tmp_path / "pets.csv"
    p.write_text("w,h,kind,site\n1.5,2,cat,a\n3,4.25,dog,b\n-1,0,cat,a\n")
    ds = load_csv(p, ["w", "h"], "kind", "site")
    assert ds.labels.tolist() == [0, 1, 0]
    assert ds.label_names == ("cat", "dog")
    assert ds.groups.tolist() == [0, 1, 0]
    out = save_csv(ds, tmp_path / "copy.csv", label_col="kind", group_col="site")
    again = load_csv(out, ["w", "h"], "kind", "site")
    assert np.array_equal(again.features, ds.features)
    assert np.array_equal(again.labels, ds.labels)
    assert again.label_names == ds.label_names


def test_csv_group_defaults_to_label(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x,y\n0.1,b\n0.2,a\n")
    ds = load_csv(p, ["x"], "y")
    assert ds.groups.tolist() == ds.labels.tolist() == [0, 1]


def test_csv_errors_name_location(tmp_path):
    p = tmp_path / "bad.csv"
    rows = ["x,y"] + [f"{i},a" for i in range(6)] + ["oops,a"]
    p.write_text("\n".join(rows) + "\n")
    with pytest.raises(DataFormatError) as exc:
        load_csv(p, ["x"], "y")
    assert exc.value.row == 7 and exc.value.column == "x"
    assert "row 7" in str(exc.value)

    p.write_text("x,y\n1,a\n")
    with pytest.raises(DataFormatError, match="missing column"):
        load_csv(p, ["z"], "y")
    p.write_text("")
    with pytest.raises(DataFormatError, match="empty"):
        load_csv(p, ["x"], "y")
    p.write_text("x,y\n1,a,extra\n")
    with pytest.raises(DataFormatError, match="row 1"):
        load_csv(p, ["x"], "y")


def _idx_fixture(tmp_path, n=2, labels=None):
    images = np.zeros((n, 28, 28), dtype=np.uint8)
    images[0, 0, 0] = 255
    img, lab = tmp_path / "img.idx", tmp_path / "lab.idx"
    write_idx(images, labels if labels is not None else list(range(n)), img, lab)
    return img, lab


def test_idx_parse_and_scaling(tmp_path):
    img, lab = _idx_fixture(tmp_path)
    ds = load_idx(img, lab)
    assert ds.features.shape == (2, 784)
    assert ds.features[0, 0] == 1.0 and ds.features[1, 0] == 0.0
    assert ds.features.min() >= 0.0 and ds.features.max() <= 1.0
    assert np.array_equal(ds.groups, ds.labels)
    assert len(load_idx(img, lab, max_items=1)) == 1


def test_idx_crafted_bytes_and_gzip(tmp_path):
    header = struct.pack(">IIII", 0x803, 2, 28, 28)
    img = tmp_path / "img.gz"
    with gzip.open(img, "wb") as fh:
        fh.write(header + bytes(range(256)) * 6 + bytes(2 * 784 - 1536))
    lab = tmp_path / "lab"
    lab.write_bytes(struct.pack(">II", 0x801, 2) + bytes([3, 7]))
    ds = load_idx(img, lab)
    assert ds.features.shape == (2, 784)
    assert ds.labels.tolist() == [3, 7]
    assert ds.num_classes == 8


def test_idx_errors(tmp_path):
    img, lab = _idx_fixture(tmp_path)
    good = img.read_bytes()
    img.write_bytes(struct.pack(">I", 0x801) + good[4:])
    with pytest.raises(DataFormatError, match="magic"):
        load_idx(img, lab)
    img.write_bytes(good[:-5])
    with pytest.raises(DataFormatError, match="payload"):
        load_idx(img, lab)
    img.write_bytes(good)
    lab.write_bytes(struct.pack(">II", 0x801, 3) + bytes(3))
    with pytest.raises(DataFormatError, match="labels"):
        load_idx(img, lab)
