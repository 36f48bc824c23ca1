import numpy as np
import pytest

from corrector_lab.environment import (
    Environment,
    GeneratorModel,
    InvalidEnvironment,
    LoadError,
    TorusShape,
    bar_c,
    conductance,
    generate_environment,
    load_environment,
    save_environment,
)

from conftest import env_from, make_env

ALL_MODELS = [
    GeneratorModel.constant(1.5),
    GeneratorModel.iid_uniform(),
    GeneratorModel.two_point(0.3),
    GeneratorModel.checkerboard_random(),
    GeneratorModel.smooth_correlated(2),
]


def test_constant_model():
    env = generate_environment(TorusShape(2, 4), GeneratorModel.constant(1.0), (0.5, 2.0), 7)
    assert env.conductances.size == 32
    assert np.all(env.conductances == 1.0)


def test_two_point_values_and_determinism():
    model = GeneratorModel.two_point(0.5, low=1.0, high=2.0)
    env = generate_environment(TorusShape(1, 8), model, (0.5, 3.0), 1)
    again = generate_environment(TorusShape(1, 8), model, (0.5, 3.0), 1)
    assert env.conductances.size == 8
    assert set(np.unique(env.conductances)) <= {1.0, 2.0}
    assert env.conductances.tobytes() == again.conductances.tobytes()


def test_uniform_mean():
    env = generate_environment(TorusShape(2, 64), GeneratorModel.iid_uniform(), (1.0, 2.0), 42)
    assert abs(env.conductances.mean() - 1.5) < 0.02


@pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: m.kind)
@pytest.mark.parametrize("d,L", [(1, 256), (2, 64), (3, 16)])
def test_ellipticity_scan(model, d, L):
    env = generate_environment(TorusShape(d, L), model, (1.0, 2.0), 3)
    a, b = env.bounds
    assert np.all(env.conductances > a) and np.all(env.conductances < b)


def test_strict_bounds_survive_extreme_uniforms():
    # eps0 pulls closed-range values inside the open interval
    env = generate_environment(TorusShape(2, 8), GeneratorModel.two_point(0.5), (1.0, 4.0), 0)
    assert env.conductances.min() > 1.0 and env.conductances.max() < 4.0
    assert set(np.unique(env.conductances)) == {1.0 + 3e-12, 4.0 - 3e-12}


def test_generation_is_order_independent():
    from corrector_lab import _rng

    env = make_env(2, 8, seed=5)
    lo, hi = 1.0 + 1e-12, 2.0 - 1e-12
    for n in [(0, 0), (3, 1), (7, 7), (2, 6)]:
        s = n[0] + 8 * n[1]
        for i in range(2):
            expected = lo + (hi - lo) * float(_rng.uniform(5, i, s))
            assert env.conductances[(i,) + n] == expected
    assert not np.array_equal(env.conductances, make_env(2, 8, seed=6).conductances)


@pytest.mark.parametrize(
    "bounds",
    [(2.0, 2.0), (3.0, 1.0), (0.0, 1.0), (-1.0, 1.0)],
)
def test_bad_bounds_rejected(bounds):
    with pytest.raises(InvalidEnvironment):
        generate_environment(TorusShape(1, 4), GeneratorModel.iid_uniform(), bounds, 0)


@pytest.mark.parametrize(
    "model",
    [GeneratorModel.constant(5.0), GeneratorModel.two_point(0.5, low=0.1, high=1.5)],
)
def test_model_outside_bounds_rejected(model):
    with pytest.raises(InvalidEnvironment):
        generate_environment(TorusShape(1, 4), model, (1.0, 2.0), 0)


def test_torus_shape_guards():
    with pytest.raises(InvalidEnvironment):
        TorusShape(0, 4)
    with pytest.raises(InvalidEnvironment):
        TorusShape(2, 1)
    assert TorusShape(3, 5).n_sites == 125


def test_conductance_lookup():
    env = env_from([[3.0, 5.0]])
    assert conductance(env, [1], 0) == 5.0
    assert conductance(env, [3], 0) == 5.0
    const = generate_environment(TorusShape(2, 4), GeneratorModel.constant(1.0), (0.5, 2), 0)
    assert conductance(const, (2, 3), 1) == 1.0
    with pytest.raises(InvalidEnvironment):
        conductance(env, [0], 1)


def test_conductance_periodic_wrap():
    env = make_env(2, 4, seed=11)
    assert conductance(env, (4, 0), 0) == conductance(env, (0, 0), 0)
    assert conductance(env, (-1, 5), 1) == conductance(env, (3, 1), 1)


def test_shift_compatibility():
    env = make_env(2, 7, seed=2)
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = rng.integers(-20, 20, size=2)
        m = rng.integers(-20, 20, size=2)
        i = int(rng.integers(0, 2))
        assert conductance(env, n + m, i) == conductance(env.shifted(m), n, i)


def test_bar_c():
    env = env_from([[3.0, 5.0]])
    assert bar_c(env, [0]) == 8.0
    const = generate_environment(TorusShape(2, 5), GeneratorModel.constant(1.0), (0.5, 2), 0)
    assert np.all(bar_c(const) == 4.0)
    rand = make_env(3, 6, seed=1)
    a, b = rand.bounds
    assert bar_c(rand).min() > 2 * 3 * a
    assert bar_c(rand).max() < 2 * 3 * b


def test_environment_is_immutable():
    env = make_env(2, 4)
    with pytest.raises(ValueError):
        env.conductances[0, 0, 0] = 1.5


def test_round_trip(tmp_path):
    env = generate_environment(TorusShape(3, 5), GeneratorModel.two_point(0.4), (1.0, 3.0), 2**63 + 17)
    path = tmp_path / "env.rcm"
    save_environment(env, path)
    back = load_environment(path)
    assert back.conductances.tobytes() == env.conductances.tobytes()
    assert back.bounds == env.bounds
    assert back.seed == env.seed
    assert back.model.kind == "iid-two-point"


def test_file_layout(tmp_path):
    env = env_from([[3.0, 5.0]], bounds=(1.0, 6.0))
    path = tmp_path / "env.rcm"
    save_environment(env, path)
    raw = path.read_bytes()
    assert raw[:4] == b"RCM1"
    assert len(raw) == 48 + 2 * 8
    assert np.frombuffer(raw[48:], "<f8").tolist() == [3.0, 5.0]


def test_first_coordinate_fastest(tmp_path):
    c = np.zeros((2, 3, 3))
    c[0] = 1.0 + np.arange(9).reshape(3, 3) / 10
    c[1] = 2.0
    env = Environment(TorusShape(2, 3), c, (0.5, 3.0), GeneratorModel.iid_uniform())
    path = tmp_path / "env.rcm"
    save_environment(env, path)
    vals = np.frombuffer(path.read_bytes()[48:48 + 72], "<f8")
    # site (n0, n1) at index n0 + 3 n1
    assert vals[1] == c[0][1, 0]
    assert vals[3] == c[0][0, 1]


def test_truncated_file(tmp_path):
    env = make_env(2, 4)
    path = tmp_path / "env.rcm"
    save_environment(env, path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(LoadError):
        load_environment(path)


def test_bad_magic_and_version(tmp_path):
    env = make_env(1, 4)
    path = tmp_path / "env.rcm"
    save_environment(env, path)
    raw = bytearray(path.read_bytes())
    path.write_bytes(b"XXXX" + bytes(raw[4:]))
    with pytest.raises(LoadError):
        load_environment(path)
    raw[4] = 9
    path.write_bytes(bytes(raw))
    with pytest.raises(LoadError):
        load_environment(path)


def test_equal_bounds_in_header(tmp_path):
    import struct

    env = make_env(1, 4)
    path = tmp_path / "env.rcm"
    save_environment(env, path)
    raw = bytearray(path.read_bytes())
    raw[24:32] = struct.pack("<d", env.bounds[0])  # b := a
    path.write_bytes(bytes(raw))
    with pytest.raises(LoadError):
        load_environment(path)
