"""Command-line front end: ``envmor {build,reduce,simulate,bound,hsv} --manifest M --out DIR``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure,
4 unsupported configuration.  On failure a JSON error object is
printed to stderr and written to ``DIR/error.json``.
"""
import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import benchmarks, signals
from .bounds import check_condition, posterior_bound
from .envelope import compress_io, compute_deltas, build_envelope, realize_modes
from .errors import EnvmorError, InvalidInputError, LoadError, UnsupportedError
from .io import read_matrix, write_matrix
from .model import StateSpaceModel, SwitchedModel, hankel_singular_values
from .reduction import balanced_truncation, irka

log = logging.getLogger('envmor')

SCHEMA_VERSION = 1

_NUM = {'type': 'number'}
_POS = {'type': 'number', 'exclusiveMinimum': 0}
_MODE = {'type': 'integer', 'minimum': 1}

MANIFEST_SCHEMA = {
    'type': 'object',
    'required': ['schema_version', 'system'],
    'additionalProperties': False,
    'properties': {
        'schema_version': {'const': SCHEMA_VERSION},
        'system': {
            'oneOf': [
                {'type': 'object', 'required': ['builtin'], 'additionalProperties': False,
                 'properties': {
                     'builtin': {'enum': ['rlc', 'heat', 'random', 'cd_player']},
                     'params': {'type': 'object'},
                     'path': {'type': 'string'}}},
                {'type': 'object', 'required': ['modes'], 'additionalProperties': False,
                 'properties': {'modes': {
                     'type': 'array', 'minItems': 1,
                     'items': {'type': 'object', 'required': ['A', 'B', 'C'],
                               'additionalProperties': False,
                               'properties': {k: {'type': 'string'} for k in 'ABCDE'}}}}},
            ]},
        'envelope': {
            'type': 'object', 'additionalProperties': False,
            'properties': {
                'tol': {'type': 'number', 'exclusiveMinimum': 0, 'exclusiveMaximum': 1},
                'reference': _MODE,
                'weights': {'type': 'array', 'items': _POS},
                'compress': {'type': 'boolean'}}},
        'switching': {
            'oneOf': [
                {'type': 'object', 'required': ['type', 'times', 'modes'], 'additionalProperties': False,
                 'properties': {'type': {'const': 'schedule'},
                                'times': {'type': 'array', 'items': _NUM, 'minItems': 1},
                                'modes': {'type': 'array', 'items': _MODE, 'minItems': 1}}},
                {'type': 'object', 'required': ['type', 'low', 'high', 'low_mode', 'high_mode'],
                 'additionalProperties': False,
                 'properties': {'type': {'const': 'hysteresis'}, 'low': _NUM, 'high': _NUM,
                                'low_mode': _MODE, 'high_mode': _MODE, 'initial_mode': _MODE,
                                'channel': {'type': 'integer', 'minimum': 0},
                                'min_dwell': {'type': 'number', 'minimum': 0}}},
            ]},
        'input': {
            'type': 'object', 'required': ['type'],
            'properties': {
                'type': {'enum': ['constant', 'sine', 'exp', 'piecewise', 'samples', 'rlc_steering']},
                'level': {}, 'amplitude': _NUM, 'frequency': _NUM, 'scale': _NUM, 'rate': _NUM,
                'times': {'type': 'array', 'items': _NUM}, 'levels': {'type': 'array'},
                'values': {'type': 'array'}, 'xi': _NUM, 'pieces': {'type': 'integer', 'minimum': 2}},
            'additionalProperties': False},
        'reduction': {
            'type': 'object', 'required': ['method', 'r'], 'additionalProperties': False,
            'properties': {'method': {'enum': ['bt', 'irka']}, 'r': {'type': 'integer', 'minimum': 1},
                           'max_iters': {'type': 'integer', 'minimum': 1},
                           'shift_tol': _POS}},
        'simulation': {
            'type': 'object', 'required': ['horizon'], 'additionalProperties': False,
            'properties': {'horizon': _POS,
                           'integrator': {'enum': ['rk45', 'backward_euler']},
                           'atol': _POS, 'rtol': _POS, 'step': _POS,
                           'samples': {'type': 'integer', 'minimum': 2},
                           'model': {'enum': ['full', 'reduced', 'envelope']}}},
    },
}


def load_manifest(path):
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise LoadError(f'manifest not found: {path}') from None
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f'manifest is not valid JSON: {exc}') from None
    try:
        jsonschema.validate(data, MANIFEST_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = '/'.join(str(p) for p in exc.absolute_path) or '<root>'
        raise InvalidInputError(f'manifest invalid at {where}: {exc.message}') from None
    data['_base'] = str(Path(path).resolve().parent)
    return data


def _file(base, name):
    p = Path(name)
    return p if p.is_absolute() else Path(base) / p


def load_system(manifest, seed=None):
    spec = manifest['system']
    base = manifest['_base']
    if 'modes' in spec:
        modes = []
        for i, mode in enumerate(spec['modes'], 1):
            mats = {}
            for k, name in mode.items():
                f = _file(base, name)
                if not f.exists():
                    raise LoadError(f'mode {i}: matrix file {f} not found')
                mats[k] = read_matrix(f)
            modes.append(StateSpaceModel(**mats))
        return SwitchedModel(modes)
    name = spec['builtin']
    params = dict(spec.get('params', {}))
    if name == 'rlc':
        return benchmarks.rlc_example()
    if name == 'heat':
        calibrated = params.pop('calibrated', True)
        for key in ('lengths', 'widths', 'cells'):
            if key in params:
                params[key] = tuple(params[key])
        try:
            prm = benchmarks.HeatParams.calibrated(**params) if calibrated \
                else benchmarks.HeatParams(**params)
        except TypeError as exc:
            raise InvalidInputError(f'bad heat parameters: {exc}') from None
        return benchmarks.heat_two_rooms(prm)
    if name == 'random':
        if seed is not None:
            params['seed'] = seed
        try:
            return benchmarks.random_lss(**params)
        except TypeError as exc:
            raise InvalidInputError(f'bad random-system parameters: {exc}') from None
    if 'path' not in spec:
        raise InvalidInputError('cd_player needs "path" to a directory with A.mtx, B.mtx, C.mtx')
    return benchmarks.cd_player_switched(_file(base, spec['path']))


def load_switching(manifest):
    spec = manifest.get('switching')
    if spec is None:
        return signals.TimeDriven(signals.SwitchSchedule.constant(1))
    if spec['type'] == 'schedule':
        return signals.TimeDriven(signals.SwitchSchedule(spec['times'], spec['modes']))
    return signals.OutputDriven.hysteresis(
        spec['low'], spec['high'], spec['low_mode'], spec['high_mode'],
        spec.get('initial_mode', spec['high_mode']), spec.get('channel', 0), spec.get('min_dwell', 0.0))


def load_input(manifest):
    spec = manifest.get('input', {'type': 'constant', 'level': 1.0})
    kind = spec['type']
    if kind == 'constant':
        return signals.Constant(spec.get('level', 1.0))
    if kind == 'sine':
        return signals.Sine(spec.get('amplitude', 1.0), spec.get('frequency', 1.0))
    if kind == 'exp':
        return signals.Exp(spec.get('scale', 1.0), spec.get('rate', 1.0))
    if kind == 'piecewise':
        return signals.PiecewiseConstant(spec['times'], spec['levels'])
    if kind == 'samples':
        return signals.Samples(spec['times'], spec['values'])
    return benchmarks.rlc_steering_input(spec.get('xi', 1.0), spec.get('pieces', 2))


def make_envelope(manifest, system):
    spec = manifest.get('envelope', {})
    tol = spec.get('tol', 1e-10)
    deltas = compute_deltas(system, tol, spec.get('reference', 1), spec.get('weights'))
    env, maps = build_envelope(system, deltas)
    if spec.get('compress', False):
        env, maps = compress_io(env, maps, tol)
    return env, maps


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + '\n')


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f'not serializable: {type(v)}')


def _write_system(folder, sys):
    folder.mkdir(parents=True, exist_ok=True)
    for k in 'ABCD':
        write_matrix(folder / f'{k}.mtx', getattr(sys, k))


def _fmt(v):
    return format(float(v), '.17g')


def cmd_build(manifest, out, seed=None):
    system = load_system(manifest, seed)
    env, maps = make_envelope(manifest, system)
    _write_system(out / 'envelope', env.sys)
    for label, M in zip(env.labels, env.core_matrices):
        write_matrix(out / 'envelope' / f'M_{label}.mtx', M)
    try:
        value, ok = check_condition(env)
    except EnvmorError as exc:
        value, ok = None, None
        log.warning('condition not evaluated: %s', exc)
    meta = {
        'n': env.n, 'm_E': env.m_E, 'p_E': env.p_E, 'n_modes': env.n_modes,
        'ranks': {str(lab): r for lab, r in zip(env.labels, env.ranks)},
        'input_offsets': list(env.input_offsets), 'output_offsets': list(env.output_offsets),
        'compressed': env.compressed, 'condition_value': value, 'condition_ok': ok,
        'cond_E': [m.cond_E for m in system.modes],
    }
    _write_json(out / 'metadata.json', meta)
    return meta


def _reduce(manifest, env):
    spec = manifest.get('reduction')
    if spec is None:
        raise InvalidInputError('manifest has no "reduction" section')
    if spec['method'] == 'bt':
        return balanced_truncation(env, spec['r'])
    return irka(env, spec['r'], spec.get('max_iters', 100), spec.get('shift_tol', 1e-6))


def cmd_reduce(manifest, out, seed=None):
    system = load_system(manifest, seed)
    env, maps = make_envelope(manifest, system)
    renv, report = _reduce(manifest, env)
    _write_system(out / 'reduced_envelope', renv.sys)
    for i, mode in enumerate(realize_modes(renv, maps).modes, 1):
        _write_system(out / 'reduced_modes' / f'mode_{i}', mode)
    write_matrix(out / 'V.mtx', report.projection.V)
    write_matrix(out / 'W.mtx', report.projection.W)
    _write_json(out / 'report.json', report.as_dict())
    return report.as_dict()


def _simulate(manifest, system, env, maps, renv, which):
    from .simulation import simulate_envelope_closed_loop, simulate_implicit, simulate_switched
    spec = manifest.get('simulation')
    if spec is None:
        raise InvalidInputError('manifest has no "simulation" section')
    sig = load_switching(manifest)
    u = load_input(manifest)
    horizon = spec['horizon']
    atol, rtol = spec.get('atol', 1e-8), spec.get('rtol', 1e-6)
    samples = spec.get('samples', 1001)
    if spec.get('integrator', 'rk45') == 'backward_euler':
        if which == 'envelope':
            raise UnsupportedError('the implicit integrator runs switched systems only')
        model = system if which == 'full' else realize_modes(renv, maps)
        return simulate_implicit(model, sig, u, horizon, spec.get('step', horizon / (samples - 1)))
    if which == 'envelope':
        return simulate_envelope_closed_loop(env, maps, sig, u, horizon, atol, rtol, samples=samples)
    model = system if which == 'full' else realize_modes(renv, maps)
    return simulate_switched(model, sig, u, horizon, atol, rtol, samples=samples)


def _write_trajectory(path, traj):
    p = traj.outputs.shape[1]
    with open(path, 'w', newline='') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(['t'] + [f'y_{i}' for i in range(1, p + 1)] + ['mode'])
        for t, y, mode in zip(traj.times, traj.outputs, traj.modes):
            w.writerow([_fmt(t)] + [_fmt(v) for v in y] + [int(mode)])


def cmd_simulate(manifest, out, seed=None):
    system = load_system(manifest, seed)
    which = manifest.get('simulation', {}).get('model', 'full')
    env = maps = renv = None
    if which != 'full':
        env, maps = make_envelope(manifest, system)
        if which == 'reduced':
            renv, _ = _reduce(manifest, env)
    traj = _simulate(manifest, system, env, maps, renv, which)
    _write_trajectory(out / 'trajectory.csv', traj)
    summary = {'samples': len(traj), 'switches': [list(e) for e in traj.events],
               'final_output': traj.outputs[-1].tolist()}
    _write_json(out / 'simulation.json', summary)
    return summary


def cmd_bound(manifest, out, seed=None):
    sig = load_switching(manifest)
    if isinstance(sig, signals.OutputDriven):
        raise UnsupportedError(
            'error bounds require switching that depends on time only; '
            'output-dependent switching can make the reduced model switch at '
            'other instants, so no bound exists')
    system = load_system(manifest, seed)
    env, maps = make_envelope(manifest, system)
    renv, _ = _reduce(manifest, env)
    spec = manifest.get('simulation')
    if spec is None:
        raise InvalidInputError('manifest has no "simulation" section')
    report = posterior_bound(env, maps, renv, sig, load_input(manifest), spec['horizon'],
                             spec.get('atol', 1e-8), spec.get('rtol', 1e-6),
                             samples=spec.get('samples', 1001))
    _write_json(out / 'bound.json', report.as_dict())
    return report.as_dict()


def _write_hsv(path, hsv):
    with open(path, 'w', newline='') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(['index', 'value', 'normalized'])
        top = hsv[0] if len(hsv) and hsv[0] > 0 else 1.0
        for i, v in enumerate(hsv, 1):
            w.writerow([i, _fmt(v), _fmt(v / top)])


def cmd_hsv(manifest, out, seed=None):
    system = load_system(manifest, seed)
    env, _ = make_envelope(manifest, system)
    hsv = hankel_singular_values(env.sys)
    _write_hsv(out / 'hsv.csv', hsv)
    for i, mode in enumerate(system.modes, 1):
        _write_hsv(out / f'hsv_mode_{i}.csv', hankel_singular_values(mode))
    return {'n': len(hsv), 'normalized_head': (hsv[:6] / hsv[0]).tolist() if len(hsv) else []}


COMMANDS = {
    'build': cmd_build, 'reduce': cmd_reduce, 'simulate': cmd_simulate,
    'bound': cmd_bound, 'hsv': cmd_hsv,
}


def _parser():
    ap = argparse.ArgumentParser(prog='envmor', description='Envelope-based reduction of switched linear systems.')
    ap.add_argument('command', choices=sorted(COMMANDS))
    ap.add_argument('--manifest', required=True, help='JSON manifest')
    ap.add_argument('--out', required=True, help='output directory')
    ap.add_argument('--seed', type=int, default=None, help='seed for random builtin systems')
    ap.add_argument('--log-level', default='WARNING',
                    choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    return ap


def _thread_limit():
    raw = os.environ.get('ENVMOR_NUM_THREADS')
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise InvalidInputError(f'ENVMOR_NUM_THREADS must be a positive integer, got {raw!r}') from None
    if n < 1:
        raise InvalidInputError('ENVMOR_NUM_THREADS must be positive')
    return n


def _fail(out, exc, code):
    err = {'error': type(exc).__name__, 'message': str(exc), 'exit_code': code}
    print(json.dumps(err, sort_keys=True), file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            _write_json(out / 'error.json', err)
        except OSError:
            pass
    return code


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format='%(levelname)s %(name)s: %(message)s')
    out = Path(args.out)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        return _fail(out, InvalidInputError('seed must be an unsigned 64-bit integer'), 2)
    try:
        from threadpoolctl import threadpool_limits
        limit = _thread_limit()
        manifest = load_manifest(args.manifest)
        out.mkdir(parents=True, exist_ok=True)
        with threadpool_limits(limits=limit):
            result = COMMANDS[args.command](manifest, out, args.seed)
    except UnsupportedError as exc:
        return _fail(out, exc, 4)
    except EnvmorError as exc:
        return _fail(out, exc, exc.exit_code)
    except np.linalg.LinAlgError as exc:
        return _fail(out, exc, 3)
    except (ValueError, OSError) as exc:
        return _fail(out, exc, 2)
    print(json.dumps(result, sort_keys=True, default=_jsonable))
    return 0


if __name__ == '__main__':
    sys.exit(main())
