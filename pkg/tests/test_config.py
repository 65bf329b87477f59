import pytest

from artfield.config import TrainConfig, dump_config, load_config, parse_config
from artfield.errors import ConfigError


def test_defaults():
    c = TrainConfig()
    assert (c.lambda_ssim, c.lambda_d, c.lambda_sem, c.lambda_sparsity, c.lambda_traj) == (0.2, 0.5, 0.5, 1.0, 1.0)
    assert (c.iters_warmup, c.iters_soft, c.iters_hard) == (300, 400, 600)
    assert c.eps_deg == 15.0 and c.n_points == 5000 and c.knn_k == 8
    assert (c.pos_lr_max, c.pos_lr_min, c.pos_lr_init, c.pos_lr_end) == (1.6e-4, 1e-8, 6000, 10000)
    assert (c.match_r, c.match_r_prime) == (0.01, 0.02)
    assert (c.beta1, c.beta2, c.adam_eps, c.lr_motion, c.lr_logits) == (0.9, 0.999, 1e-8, 5e-3, 1e-2)


def test_dump_parse_round_trip():
    c = TrainConfig(seed=7, lambda_traj=0.0, front_only=True)
    assert parse_config(dump_config(c)) == c
    assert parse_config(dump_config(c)).digest() == c.digest()


def test_parse_comments_and_blank_lines():
    c = parse_config("# comment\n\niters_hard = 12   # trailing\nsparsity_mean = off\n")
    assert c.iters_hard == 12 and c.sparsity_mean is False


@pytest.mark.parametrize("text", [
    "iters_hard 12",
    "no_such_key = 1",
    "iters_hard = twelve",
    "front_only = maybe",
    "lambda_traj = -1",
    "iters_soft = 10",  # check step 250 past the soft stage
    "pos_lr_end = 6000",
    "temperature = 0",
])
def test_malformed_configs_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


def test_digest_tracks_values():
    assert TrainConfig().digest() == TrainConfig().digest()
    assert TrainConfig().digest() != TrainConfig(seed=1).digest()


def test_replace_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        TrainConfig().replace(bogus=1)
