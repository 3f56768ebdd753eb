import pytest

from revanon.config import (Config, apply_overrides, desk_config, from_dict, load_config,
                            save_config)
from revanon.errors import InvalidArgument


def test_full_preset_defaults():
    cfg = load_config(preset="full")
    assert tuple(cfg.data.image_size) == (256, 128)
    assert cfg.train.batch_size == 64 and cfg.train.lambda_l1 == 100
    assert cfg.model.reid.backbone == "resnet50" and cfg.model.reid.last_stride == 1
    assert (cfg.train.eps_psnr, cfg.train.eps_ssim, cfg.train.eps_r1) == (1.0, 0.05, 0.05)
    assert tuple(cfg.train.gen_betas) == (0.5, 0.999)
    assert tuple(cfg.train.reid_betas) == (0.9, 0.999)


def test_desk_preset():
    cfg = desk_config()
    assert tuple(cfg.data.image_size) == tuple(cfg.model.generator.image_size) == (64, 32)
    assert cfg.train.epochs == 30


def test_overrides_parse_yaml():
    cfg = apply_overrides(desk_config(), ["train.epochs=3", "schedule.decay_epochs=[2, 3]",
                                          "train.upgrade=false"])
    assert cfg.train.epochs == 3 and list(cfg.schedule.decay_epochs) == [2, 3]
    assert cfg.train.upgrade is False


@pytest.mark.parametrize("bad", ["train.nope=1", "nosection.x=1", "novalue"])
def test_bad_override(bad):
    with pytest.raises(InvalidArgument):
        apply_overrides(desk_config(), [bad])


def test_unknown_preset():
    with pytest.raises(InvalidArgument):
        load_config(preset="huge")


def test_file_round_trip(tmp_path):
    cfg = apply_overrides(desk_config(), ["train.seed=11"])
    save_config(cfg, tmp_path / "c.yaml")
    back = load_config(tmp_path / "c.yaml", preset="full")
    assert back.to_dict() == cfg.to_dict()


def test_partial_file_merges_over_preset(tmp_path):
    (tmp_path / "p.yaml").write_text("train:\n  epochs: 5\n")
    cfg = load_config(tmp_path / "p.yaml", preset="desk")
    assert cfg.train.epochs == 5 and cfg.train.P == 4


def test_fingerprint_tracks_model_only():
    a = desk_config()
    b = apply_overrides(a, ["train.epochs=99", "schedule.base_lr=0.1"])
    c = apply_overrides(a, ["model.generator.base_width=16"])
    assert a.fingerprint() == b.fingerprint() != c.fingerprint()
    assert from_dict(a.to_dict()).fingerprint() == a.fingerprint()
    assert isinstance(Config().fingerprint(), str)
