import csv
import hashlib
import json

import numpy as np
import pytest

from envmor import cli
from envmor.io import read_matrix, write_matrix

from helpers import FIXTURES

RLC_SIM = {
    'schema_version': 1,
    'system': {'builtin': 'rlc'},
    'switching': {'type': 'schedule', 'times': [0.0, 1.0], 'modes': [1, 2]},
    'input': {'type': 'rlc_steering', 'xi': 1.0},
    'simulation': {'horizon': 2.0, 'atol': 1e-10, 'rtol': 1e-9, 'samples': 201},
}


def run(tmp_path, manifest, command, *extra, name='out'):
    path = tmp_path / f'{name}.json'
    path.write_text(json.dumps(manifest))
    out = tmp_path / name
    code = cli.main([command, '--manifest', str(path), '--out', str(out), *extra])
    return code, out


def digest(folder):
    h = hashlib.sha256()
    for f in sorted(p for p in folder.rglob('*') if p.is_file()):
        h.update(f.relative_to(folder).as_posix().encode())
        h.update(f.read_bytes())
    return h.hexdigest()


def test_build_rlc_metadata(tmp_path):
    code, out = run(tmp_path, {'schema_version': 1, 'system': {'builtin': 'rlc'}}, 'build')
    assert code == 0
    meta = json.loads((out / 'metadata.json').read_text())
    assert meta['ranks'] == {'2': 1}
    assert (meta['m_E'], meta['p_E'], meta['n']) == (3, 3, 2)
    assert meta['input_offsets'] == [0, 1, 2, 3]
    assert meta['condition_value'] > 0
    np.testing.assert_array_equal(read_matrix(out / 'envelope' / 'M_2.mtx'), [[1.0]])


def test_build_heat_dimension(tmp_path):
    code, out = run(tmp_path, {'schema_version': 1, 'system': {'builtin': 'heat'}}, 'build')
    assert code == 0
    assert json.loads((out / 'metadata.json').read_text())['n'] == 103


def test_single_mode_build_copies_matrices(tmp_path, rng):
    mats = {'A': -np.eye(3) + 0.1 * rng.standard_normal((3, 3)),
            'B': rng.standard_normal((3, 2)), 'C': rng.standard_normal((1, 3))}
    for k, M in mats.items():
        write_matrix(tmp_path / f'{k}.mtx', M)
    manifest = {'schema_version': 1,
                'system': {'modes': [{k: f'{k}.mtx' for k in 'ABC'}]}}
    code, out = run(tmp_path, manifest, 'build')
    assert code == 0
    for k in 'ABC':
        written = (out / 'envelope' / f'{k}.mtx').read_bytes()
        assert written == (tmp_path / f'{k}.mtx').read_bytes()


def test_hsv_heat(tmp_path):
    code, out = run(tmp_path, {'schema_version': 1, 'system': {'builtin': 'heat'}}, 'hsv')
    assert code == 0
    with open(out / 'hsv.csv') as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ['index', 'value', 'normalized']
    assert float(rows[1][2]) == 1.0
    assert float(rows[2][2]) == pytest.approx(0.9575, abs=5e-4)
    assert (out / 'hsv_mode_2.csv').exists()


def test_simulate_rlc_final_output(tmp_path):
    code, out = run(tmp_path, RLC_SIM, 'simulate')
    assert code == 0
    with open(out / 'trajectory.csv') as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ['t', 'y_1', 'mode']
    # the switch instant appears once per mode
    assert len(rows) == 1 + 201 + 1
    assert [r[2] for r in rows[1:] if float(r[0]) == 1.0] == ['1', '2']
    assert float(rows[-1][0]) == 2.0
    assert float(rows[-1][1]) == pytest.approx(np.exp(-1), abs=1e-6)
    assert rows[1][2] == '1' and rows[-1][2] == '2'


@pytest.mark.parametrize('model', ['envelope', 'reduced'])
def test_simulate_envelope_and_reduced(tmp_path, model):
    manifest = dict(RLC_SIM, reduction={'method': 'bt', 'r': 2})
    manifest['simulation'] = dict(RLC_SIM['simulation'], model=model)
    code, out = run(tmp_path, manifest, 'simulate')
    assert code == 0
    final = json.loads((out / 'simulation.json').read_text())['final_output'][0]
    assert final == pytest.approx(np.exp(-1), abs=1e-6)


def test_simulate_backward_euler(tmp_path):
    manifest = dict(RLC_SIM)
    manifest['simulation'] = {'horizon': 2.0, 'integrator': 'backward_euler', 'step': 1e-3}
    code, out = run(tmp_path, manifest, 'simulate')
    assert code == 0
    final = json.loads((out / 'simulation.json').read_text())['final_output'][0]
    assert final == pytest.approx(np.exp(-1), abs=1e-2)


def test_reduce_writes_report(tmp_path):
    manifest = {'schema_version': 1, 'system': {'builtin': 'random', 'params': {'n': 8}},
                'reduction': {'method': 'bt', 'r': 4}}
    code, out = run(tmp_path, manifest, 'reduce', '--seed', '3')
    assert code == 0
    report = json.loads((out / 'report.json').read_text())
    assert report['method'] == 'bt' and report['r'] == 4 and len(report['hsv']) == 8
    assert read_matrix(out / 'reduced_modes' / 'mode_2' / 'A.mtx').shape == (4, 4)
    assert read_matrix(out / 'V.mtx').shape == (8, 4)


def test_reduce_irka(tmp_path):
    manifest = {'schema_version': 1, 'system': {'builtin': 'random', 'params': {'n': 8}},
                'reduction': {'method': 'irka', 'r': 3}}
    code, out = run(tmp_path, manifest, 'reduce')
    assert code == 0
    assert json.loads((out / 'report.json').read_text())['bt_bound'] is None


def test_bound_time_driven(tmp_path):
    manifest = {'schema_version': 1,
                'system': {'builtin': 'cd_player',
                           'path': str(FIXTURES / 'cd_player_synthetic')},
                'switching': {'type': 'schedule', 'times': [0.0, 0.5, 1.0], 'modes': [2, 1, 2]},
                'input': {'type': 'sine', 'amplitude': 1.0, 'frequency': 1.0},
                'reduction': {'method': 'bt', 'r': 2},
                'simulation': {'horizon': 2.0}}
    code, out = run(tmp_path, manifest, 'bound')
    assert code == 0
    rep = json.loads((out / 'bound.json').read_text())
    assert rep['condition_value'] == 0.0 and rep['condition_ok']
    assert rep['measured_error'] <= rep['bound']


def test_bound_output_driven_is_unsupported(tmp_path, capsys):
    manifest = dict(RLC_SIM, reduction={'method': 'bt', 'r': 1})
    manifest['switching'] = {'type': 'hysteresis', 'low': 0.2, 'high': 0.5,
                             'low_mode': 1, 'high_mode': 2}
    code, out = run(tmp_path, manifest, 'bound')
    assert code == 4
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err['exit_code'] == 4 and 'time only' in err['message']
    assert json.loads((out / 'error.json').read_text()) == err


@pytest.mark.parametrize('manifest', [
    {'schema_version': 2, 'system': {'builtin': 'rlc'}},
    {'schema_version': 1},
    {'schema_version': 1, 'system': {'builtin': 'nope'}},
    {'schema_version': 1, 'system': {'builtin': 'rlc'}, 'extra': 1},
    {'schema_version': 1, 'system': {'modes': []}},
    {'schema_version': 1, 'system': {'modes': [{'A': 'missing.mtx', 'B': 'b', 'C': 'c'}]}},
    {'schema_version': 1, 'system': {'builtin': 'cd_player'}},
    {'schema_version': 1, 'system': {'builtin': 'heat', 'params': {'k1': -1}}},
    {'schema_version': 1, 'system': {'builtin': 'heat', 'params': {'bogus': 1}}},
])
def test_validation_errors(tmp_path, manifest):
    code, out = run(tmp_path, manifest, 'build')
    assert code == 2
    assert json.loads((out / 'error.json').read_text())['exit_code'] == 2


def test_missing_section(tmp_path):
    code, _ = run(tmp_path, {'schema_version': 1, 'system': {'builtin': 'rlc'}}, 'reduce')
    assert code == 2


def test_invalid_json_and_missing_manifest(tmp_path):
    bad = tmp_path / 'bad.json'
    bad.write_text('{not json')
    assert cli.main(['build', '--manifest', str(bad), '--out', str(tmp_path / 'o')]) == 2
    assert cli.main(['build', '--manifest', str(tmp_path / 'none.json'),
                     '--out', str(tmp_path / 'o2')]) == 2


def test_numerical_failure_exit_code(tmp_path):
    # unstable envelope: balanced truncation is impossible
    for k, M in {'A': [[1.0]], 'B': [[1.0]], 'C': [[1.0]]}.items():
        write_matrix(tmp_path / f'{k}.mtx', M)
    manifest = {'schema_version': 1, 'system': {'modes': [{k: f'{k}.mtx' for k in 'ABC'}]},
                'reduction': {'method': 'bt', 'r': 1}}
    code, out = run(tmp_path, manifest, 'reduce')
    assert code == 3


def test_runs_are_reproducible(tmp_path):
    manifest = {'schema_version': 1, 'system': {'builtin': 'random', 'params': {'n': 6}},
                'switching': {'type': 'schedule', 'times': [0.0, 0.3], 'modes': [1, 2]},
                'reduction': {'method': 'bt', 'r': 3},
                'simulation': {'horizon': 1.0, 'model': 'reduced', 'samples': 51}}
    digests = set()
    for name in ('a', 'b'):
        for command in ('build', 'reduce', 'simulate', 'hsv'):
            code, out = run(tmp_path, manifest, command, '--seed', '11', name=f'{name}_{command}')
            assert code == 0
            digests.add((command, digest(out)))
    assert len(digests) == 4


def test_seed_changes_random_system(tmp_path):
    manifest = {'schema_version': 1, 'system': {'builtin': 'random', 'params': {'n': 4}}}
    _, a = run(tmp_path, manifest, 'build', '--seed', '1', name='a')
    _, b = run(tmp_path, manifest, 'build', '--seed', '2', name='b')
    assert digest(a) != digest(b)


def test_thread_limit(tmp_path, monkeypatch):
    monkeypatch.setenv('ENVMOR_NUM_THREADS', '1')
    code, _ = run(tmp_path, {'schema_version': 1, 'system': {'builtin': 'rlc'}}, 'build', name='ok')
    assert code == 0
    monkeypatch.setenv('ENVMOR_NUM_THREADS', 'zero')
    code, _ = run(tmp_path, {'schema_version': 1, 'system': {'builtin': 'rlc'}}, 'build', name='bad')
    assert code == 2


def test_seed_range(tmp_path):
    code, _ = run(tmp_path, {'schema_version': 1, 'system': {'builtin': 'rlc'}}, 'build',
                  '--seed', '-1')
    assert code == 2
