import math
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fdabnn.checkpoint import MAGIC, CheckpointError, load_checkpoint, save_checkpoint
from fdabnn.config import (
    PRESETS, ConfigError, TrainConfig, apply_overrides, config_from_pairs, dump_config, load_config, parse_pairs,
)
from fdabnn.data import (
    CIFAR_RECORD, IDX_IMAGES_MAGIC, DataError, Dataset, crop_and_flip, load_dataset, read_cifar_batch, read_idx,
    write_idx,
)
from fdabnn.schedules import ScheduleSetting, lr_at, n_at
from fdabnn.train import (
    METRICS_HEADER, ABLATION_GRIDS, ablation_sweep, alpha_for_epoch, evaluate, evaluate_model, load_model, model_for,
    parse_sweep_spec, train,
)


class TestTermSchedule:
    def test_fixed(self):
        s = ScheduleSetting("fixed", n_p=10, epochs=7)
        assert {n_at(e, s) for e in range(7)} == {10}

    def test_ramp_from_ns_final(self):
        s = ScheduleSetting("ramp_from_ns", n_s=10, epochs=400)
        assert s.n_p == 20 and n_at(0, s) == 10 and n_at(399, s) == 20

    def test_ramp_from_one_start(self):
        s = ScheduleSetting("ramp_from_one", n_p=8, epochs=5)
        assert [n_at(e, s) for e in range(5)] == [1, 2, 4, 6, 8]

    @given(st.sampled_from(["ramp_from_one", "ramp_from_ns"]), st.integers(1, 30), st.integers(1, 60))
    def test_monotone_integer_clamped(self, kind, n_s, epochs):
        s = ScheduleSetting(kind, n_p=2 * n_s, n_s=n_s, epochs=epochs)
        values = [n_at(e, s) for e in range(epochs)]
        assert all(a <= b for a, b in zip(values, values[1:]))
        assert all(s.start <= v <= s.n_p and isinstance(v, int) for v in values)
        assert values[-1] == s.n_p

    def test_invalid(self):
        with pytest.raises(ValueError):
            ScheduleSetting("cyclic", n_p=3)
        with pytest.raises(ValueError):
            ScheduleSetting("ramp_from_ns", n_s=5, n_p=3)
        with pytest.raises(ValueError):
            n_at(5, ScheduleSetting("fixed", n_p=3, epochs=5))


class TestLearningRate:
    def test_cosine(self):
        assert lr_at(0, 0.1, 10) == 0.1
        assert lr_at(5, 0.1, 10) == pytest.approx(0.05)
        assert all(lr_at(e, 0.1, 10) > 0 for e in range(10))

    def test_step_and_constant(self):
        assert lr_at(6, 0.1, 10, "step", (3, 6)) == pytest.approx(0.001)
        assert lr_at(9, 0.1, 10, "constant") == 0.1
        with pytest.raises(ValueError):
            lr_at(0, 0.1, 10, "warmup")


class TestAlphaForEpoch:
    def test_zero_at_final_epoch(self):
        cfg = TrainConfig(epochs=5, alpha0=0.1)
        values = [alpha_for_epoch(cfg, e) for e in range(5)]
        assert values[0] == 0.1 and values[-1] == 0.0
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_off_without_adapters(self):
        cfg = TrainConfig(weight_adapter=False, activation_adapter=False)
        assert alpha_for_epoch(cfg, 0) == 0.0


class TestConfig:
    def test_cifar_recipe(self):
        cfg = config_from_pairs([("preset", "cifar10_resnet20")])
        assert (cfg.epochs, cfg.batch_size, cfg.lr, cfg.momentum, cfg.weight_decay) == (400, 128, 0.1, 0.9, 1e-4)
        assert cfg.schedule_setting().n_p == 2 * cfg.n_s

    def test_parse_with_comments(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# desk run\npreset = mnist_toycnn\nepochs = 3  # short\n\nlr_milestones = 1, 2\n")
        cfg = load_config(path, ["seed=9", "surrogate=STE"])
        assert cfg.epochs == 3 and cfg.seed == 9 and cfg.surrogate == "ste" and cfg.lr_milestones == (1, 2)

    def test_dump_roundtrip(self, tmp_path):
        cfg = config_from_pairs([("preset", "cifar10_vggsmall"), ("eta", "linear")])
        again = config_from_pairs(parse_pairs(dump_config(cfg)))
        assert again == cfg

    def test_dict_roundtrip(self):
        cfg = TrainConfig(lr_milestones=(3, 7), figures=True)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("text", ["epochs = -1", "mystery = 3", "epochs = many", "surrogate = magic",
                                      "just words", "preset = nope", "n_s = 5\nn_p = 2", "use = "])
    def test_errors(self, tmp_path, text):
        path = tmp_path / "bad.cfg"
        path.write_text(text)
        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.cfg")

    def test_bad_override(self):
        with pytest.raises(ConfigError):
            apply_overrides(TrainConfig(), ["epochs"])

    def test_presets_validate(self):
        for name in PRESETS:
            config_from_pairs([("preset", name)]).validate()


class TestData:
    def test_idx_roundtrip(self, tmp_path, rng):
        x = rng.integers(0, 256, (4, 28, 28)).astype(np.uint8)
        write_idx(tmp_path / "a.idx", x)
        np.testing.assert_array_equal(read_idx(tmp_path / "a.idx", IDX_IMAGES_MAGIC), x)
        write_idx(tmp_path / "a.idx.gz", x)
        np.testing.assert_array_equal(read_idx(tmp_path / "a.idx.gz", IDX_IMAGES_MAGIC), x)

    def test_idx_bad_magic(self, tmp_path):
        write_idx(tmp_path / "labels", np.zeros(3, np.uint8))
        with pytest.raises(DataError, match="magic"):
            read_idx(tmp_path / "labels", IDX_IMAGES_MAGIC)

    def test_idx_truncated(self, tmp_path):
        (tmp_path / "x").write_bytes(struct.pack(">I", IDX_IMAGES_MAGIC) + struct.pack(">3I", 2, 28, 28) + b"\0" * 10)
        with pytest.raises(DataError):
            read_idx(tmp_path / "x", IDX_IMAGES_MAGIC)

    def test_cifar_records(self, tmp_path, rng):
        rec = rng.integers(0, 256, (5, CIFAR_RECORD)).astype(np.uint8)
        rec[:, 0] = [0, 3, 9, 1, 2]
        (tmp_path / "b.bin").write_bytes(rec.tobytes())
        images, labels = read_cifar_batch(tmp_path / "b.bin")
        assert images.shape == (5, 3, 32, 32)
        np.testing.assert_array_equal(labels, [0, 3, 9, 1, 2])
        np.testing.assert_array_equal(images[1, 2].ravel(), rec[1, 1 + 2048:])

    def test_cifar_bad_length(self, tmp_path):
        (tmp_path / "b.bin").write_bytes(b"\0" * (CIFAR_RECORD + 1))
        with pytest.raises(DataError):
            read_cifar_batch(tmp_path / "b.bin")

    def test_cifar_split(self, tmp_path, rng):
        for name in ["test_batch.bin"]:
            rec = rng.integers(0, 256, (7, CIFAR_RECORD)).astype(np.uint8)
            rec[:, 0] %= 10
            (tmp_path / name).write_bytes(rec.tobytes())
        data = load_dataset("cifar10", "test", tmp_path)
        assert len(data) == 7 and data.images.shape[1:] == (3, 32, 32) and data.images.dtype == np.float32

    def test_label_out_of_range(self, tmp_path, rng):
        rec = rng.integers(0, 256, (2, CIFAR_RECORD)).astype(np.uint8)
        rec[:, 0] = 12
        (tmp_path / "test_batch.bin").write_bytes(rec.tobytes())
        with pytest.raises(DataError, match="range"):
            load_dataset("cifar10", "test", tmp_path)

    def test_missing_files(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset("mnist", "train", tmp_path)
        with pytest.raises(DataError):
            load_dataset("mnist", "train", tmp_path / "nowhere")

    def test_mnist_geometry(self, synthetic_mnist):
        data = load_dataset("mnist", "train", synthetic_mnist)
        assert data.geometry == (1, 28) and data.images.shape == (256, 1, 28, 28)

    def test_first_batch_reproducible(self, synthetic_mnist):
        data = load_dataset("mnist", "train", synthetic_mnist)
        a = next(data.batches(32, np.random.default_rng(4)))
        b = next(data.batches(32, np.random.default_rng(4)))
        assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()

    def test_augmentation_shapes(self, rng):
        x = rng.normal(size=(6, 3, 32, 32)).astype(np.float32)
        y = crop_and_flip(x, rng)
        assert y.shape == x.shape and y.dtype == x.dtype


class TestCheckpoint:
    def test_roundtrip(self, tmp_path, rng):
        tensors = {"w": rng.normal(size=(3, 4)).astype(np.float32), "b": rng.normal(size=2),
                   "steps": np.arange(3, dtype=np.int64)}
        save_checkpoint(tmp_path / "m.ckpt", tensors, {"note": "x"})
        loaded, meta = load_checkpoint(tmp_path / "m.ckpt")
        assert meta == {"note": "x"}
        for k, v in tensors.items():
            assert loaded[k].dtype == v.dtype
            np.testing.assert_array_equal(loaded[k], v)

    def test_layout(self, tmp_path):
        save_checkpoint(tmp_path / "m.ckpt", {"x": np.array([1.0], np.float32)})
        raw = (tmp_path / "m.ckpt").read_bytes()
        version, hlen = struct.unpack("<IQ", raw[8:20])
        assert raw[:8] == MAGIC and version == 1
        assert raw[20 + hlen:] == struct.pack("<f", 1.0)

    def test_corrupt(self, tmp_path):
        (tmp_path / "bad.ckpt").write_bytes(b"nonsense")
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "bad.ckpt")
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "absent.ckpt")


def tiny_config(tmp_path, data_dir, **kw) -> TrainConfig:
    base = dict(data_dir=str(data_dir), epochs=2, batch_size=64, eval_batch_size=64, lr=0.01, n_s=1, n_p=2,
                out_dir=str(tmp_path / "run"), log_wall_time=False, adapter_k=64)
    base.update(kw)
    return TrainConfig(**base)


class TestTrain:
    def test_metrics_and_checkpoint(self, tmp_path, synthetic_mnist):
        cfg = tiny_config(tmp_path, synthetic_mnist, epochs=3)
        result = train(cfg)
        lines = result.metrics_path.read_text().splitlines()
        assert lines[0] == ",".join(METRICS_HEADER)
        assert len(lines) == 4
        rows = [r.split(",") for r in lines[1:]]
        assert [int(r[4]) for r in rows] == [1, 1, 2]
        assert float(rows[-1][5]) == 0.0 and float(rows[0][5]) == pytest.approx(0.1)
        assert all(math.isfinite(float(r[1])) for r in rows)
        model, loaded_cfg, meta = load_model(result.checkpoint_path)
        assert loaded_cfg == cfg and meta["geometry"] == [1, 28]

    def test_deterministic(self, tmp_path, synthetic_mnist):
        a = train(tiny_config(tmp_path / "a", synthetic_mnist)).metrics_path.read_bytes()
        b = train(tiny_config(tmp_path / "b", synthetic_mnist)).metrics_path.read_bytes()
        assert a == b

    def test_evaluate_matches_last_report(self, tmp_path, synthetic_mnist):
        result = train(tiny_config(tmp_path, synthetic_mnist))
        assert evaluate(result.checkpoint_path) == result.final_test_acc
        assert evaluate(result.checkpoint_path, synthetic_mnist) == result.final_test_acc

    def test_packed_accuracy_equals_float_path(self, tmp_path, synthetic_mnist):
        result = train(tiny_config(tmp_path, synthetic_mnist))
        model, cfg, _ = load_model(result.checkpoint_path)
        data = load_dataset("mnist", "test", synthetic_mnist)
        assert evaluate_model(model, data, packed=True) == evaluate_model(model, data, packed=False)

    def test_random_weights_near_chance(self, tmp_path):
        from conftest import write_synthetic_mnist

        root = write_synthetic_mnist(tmp_path / "d", n_train=10, n_test=2000, seed=3)
        cfg = tiny_config(tmp_path, root)
        model = model_for(cfg, (1, 28))
        acc = evaluate_model(model, load_dataset("mnist", "test", root))
        assert 0.05 <= acc <= 0.20

    def test_learns_synthetic_task(self, tmp_path, synthetic_mnist):
        result = train(tiny_config(tmp_path, synthetic_mnist, epochs=3, weight_adapter=False,
                                   activation_adapter=False))
        assert result.final_test_acc > 0.5

    def test_ste_baseline_has_no_adapters(self, tmp_path):
        cfg = config_from_pairs([("preset", "mnist_toycnn_ste")])
        model = model_for(cfg, (1, 28))
        assert all(not layer.adapters() for layer in model.binary_layers())
        assert all(layer.weight_surrogate.kind == "ste" for layer in model.binary_layers())

    def test_missing_data(self, tmp_path):
        with pytest.raises(DataError):
            train(tiny_config(tmp_path, tmp_path / "none"))

    def test_evaluate_errors(self, tmp_path, synthetic_mnist):
        result = train(tiny_config(tmp_path, synthetic_mnist, epochs=1))
        with pytest.raises(CheckpointError):
            evaluate(tmp_path / "absent.ckpt")
        with pytest.raises(DataError):
            evaluate(result.checkpoint_path, tmp_path / "empty")


class TestSweep:
    def test_grids(self):
        assert [name for name, _ in ABLATION_GRIDS["surrogate_adapter"]] == ["ste", "fda", "fda+adapter", "ste+adapter"]
        assert len(ABLATION_GRIDS["baseline_adapter"]) == 6 and len(ABLATION_GRIDS["shortcut"]) == 3

    def test_parse(self):
        base, variants = parse_sweep_spec("epochs = 2\ngrid = shortcut\nvariant = quick: lr=0.05, n_s=3\n")
        assert base == [("epochs", "2")]
        assert variants[-1] == ("quick", {"lr": "0.05", "n_s": "3"})
        assert len(variants) == 4

    @pytest.mark.parametrize("text", ["epochs = 2", "grid = unknown", "variant = v: lr"])
    def test_parse_errors(self, text):
        with pytest.raises(ConfigError):
            parse_sweep_spec(text)

    def test_table(self, tmp_path, synthetic_mnist):
        base = tiny_config(tmp_path, synthetic_mnist, epochs=1)
        variants = [("ste", {"surrogate": "ste", "weight_adapter": "false", "activation_adapter": "false"}),
                    ("fda+adapter", {"surrogate": "fda"})]
        rows = ablation_sweep(base, variants, tmp_path / "table.csv")
        lines = (tmp_path / "table.csv").read_text().splitlines()
        assert lines[0].startswith("variant,surrogate,adapter,eta")
        assert [r["adapter"] for r in rows] == ["off", "on"]
        assert lines[1].startswith("ste,ste,off,-")
