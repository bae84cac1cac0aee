"""
Command line entry point. Every subcommand reads the same experiment file:

    hypolab certify experiment.json [--require-feasible]
    hypolab checks experiment.json
    hypolab evolve experiment.json
    hypolab particles experiment.json

Exit codes are 0 on success, 2 on an invalid experiment, 3 on a numerical failure and 4 when --require-feasible is passed and the certificate is infeasible.
"""
import argparse
import dataclasses
import json
import logging
import os
import sys

from hypolab.checks import EigenBoundSpec, bounds_from_models, run_all
from hypolab.config import load_config, resolve_threads, search_grid
from hypolab.equilibrium import PhaseGrid, ckp_check, derived_l1_constant, fixed_point
from hypolab.errors import ConfigError, GridError, HypolabError
from hypolab.infomatrix import XYGrid, certify_lambda, search_directions
from hypolab.kinetic import (SolverConfig, check_dissipation_inequality, check_energy_identity, fit_rate,
                             initial_density, run)
from hypolab.particles import compare_marginals, simulate
from hypolab.report import build_report, verdict

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INFEASIBLE = 4
# relative defect below which the energy identity is reported as holding
ENERGY_IDENTITY_TOLERANCE = 0.05
FLAT_TOLERANCE = 1e-12


def _output_dir(config):
    os.makedirs(config.outputs.directory, exist_ok=True)
    return config.outputs.directory


def _write_json(config, filename, data):
    if not config.outputs.json:
        return None
    path = os.path.join(_output_dir(config), filename)
    with open(path, 'w', encoding='utf8', newline='\n') as file:
        json.dump(data, file, indent=2)
        file.write('\n')
    logger.info('Wrote %s', path)
    return path


def _csv_path(config, filename):
    return os.path.join(_output_dir(config), filename) if config.outputs.csv else None


def _phase_grid(config, domain):
    pde = config.pde
    return PhaseGrid(domain, pde.nx, pde.nv, pde.vmax)


def _solver_config(config, grid, t_end, snapshot_times):
    pde = config.pde
    try:
        return SolverConfig(grid, pde.dt, t_end, transport=pde.transport, stride=pde.stride,
                            direction=config.direction.pair, initial=pde.initial,
                            snapshot_times=snapshot_times)
    except ValueError as err:
        raise ConfigError(f'Invalid pde section: {err}') from err


def _bounds(config, kernel, potential):
    """
    Eigenvalue ranges of the checks section, completed by the ranges the builtin models declare.
    """
    declared = config.checks
    from_models = bounds_from_models(kernel, potential)
    return EigenBoundSpec(u_range=declared.u_range if declared.u_range is not None else from_models.u_range,
                          wxx_range=declared.wxx_range if declared.wxx_range is not None else from_models.wxx_range,
                          wxy_range=declared.wxy_range if declared.wxy_range is not None else from_models.wxy_range,
                          vxx_range=declared.vxx_range)


def _run_checks(config, direction, kernel, potential):
    checks = config.checks
    return run_all(direction, _bounds(config, kernel, potential), delta=checks.delta,
                   stated_threshold=checks.stated_threshold, lambda_U=checks.lambda_U,
                   wxx_eig=checks.wxx_eig, wxy_eig=checks.wxy_eig, wdiff_eig=checks.wdiff_eig)


def _print_checks(results, stream):
    for result in results:
        values = ', '.join(f'{key}={value}' for key, value in result.values.items())
        note = f' [{result.note}]' if result.note else ''
        print(f'{result.name:<22} {verdict(result.feasible):<10} {values}{note}', file=stream)


def cmd_certify(config, threads=1, stream=None):
    """
    Certifies the decay constant of the configured direction pair, or of the best pair of 'direction.search', and runs the closed-form checkers on the same direction.

    Returns the SpectralCertificate.
    """
    stream = stream or sys.stdout
    kernel, potential, domain = config.build_model()
    xy_grid = XYGrid(domain, config.certification.points_per_axis)
    if config.direction.search is not None:
        _, certificate = search_directions(kernel, potential, search_grid(config.direction), xy_grid, threads)
    else:
        certificate = certify_lambda(kernel, potential, config.direction.pair, xy_grid, threads)
    certificate.checks = _run_checks(config, certificate.direction, kernel, potential)
    _write_json(config, 'certificate.json', certificate.to_dict())

    print(f'lambda = {certificate.lambda_:.6g} at z = ({certificate.direction.z1:g}, {certificate.direction.z2:g}): '
          f"{'feasible' if certificate.feasible else 'infeasible'}", file=stream)
    for check in certificate.checks:
        if check.name == 'lambda_U' and not check.skipped:
            print(f"lambda_U = {check.values['lambda_U']:.4f}", file=stream)
        if check.name == 'example2_interval' and 'interval' in check.values:
            low, high = check.values['interval']
            print(f'interval = ({low:.4f}, {high:.4f})', file=stream)
    return certificate


def cmd_checks(config, stream=None):
    """
    Runs every closed-form checker on the configured direction pair. Returns the list of CheckResult.
    """
    stream = stream or sys.stdout
    kernel, potential, _ = config.build_model()
    direction = config.direction.pair
    results = _run_checks(config, direction, kernel, potential)
    _write_json(config, 'checks.json', {'z1': direction.z1, 'z2': direction.z2,
                                        'checks': [result.to_dict() for result in results]})
    _print_checks(results, stream)
    return results


def _lambda_for_verdicts(config, kernel, potential, domain, threads):
    if config.pde.lambda_ is not None:
        return config.pde.lambda_, 'config'
    xy_grid = XYGrid(domain, config.certification.points_per_axis)
    certificate = certify_lambda(kernel, potential, config.direction.pair, xy_grid, threads)
    return certificate.lambda_, 'certificate'


def _energy_identity(series, dissipation):
    if len(series) < 3:
        return {'defect': None, 'holds': None}
    defect = check_energy_identity(series, dissipation=dissipation)
    energy = series['E']
    flat = float(abs(energy - energy[0]).max()) < FLAT_TOLERANCE
    return {'defect': defect, 'holds': bool(flat or defect <= ENERGY_IDENTITY_TOLERANCE)}


def _fit(series, field, window):
    try:
        return fit_rate(series, field, window)
    except GridError as err:
        logger.warning('No %s rate fit: %s', field, err)
        return None


def cmd_evolve(config, threads=1, stream=None):
    """
    Solves the kinetic equation from the configured initial density and checks the run against the certified decay constant.

    Returns the summary dict written to evolve.json.
    """
    stream = stream or sys.stdout
    kernel, potential, domain = config.build_model()
    pde = config.pde
    grid = _phase_grid(config, domain)
    solver_config = _solver_config(config, grid, pde.t_end, tuple(pde.snapshot_times) + (pde.t_end,))
    equilibrium = fixed_point(kernel, potential, grid, tol=pde.tol, max_iter=pde.max_iter, damping=pde.damping)
    series = run(solver_config, kernel, potential, equilibrium=equilibrium)
    lambda_, source = _lambda_for_verdicts(config, kernel, potential, domain, threads)

    window = pde.fit_window if pde.fit_window is not None else (pde.t_end / 5, pde.t_end)
    final = series.snapshots[max(series.snapshots)]
    ckp = ckp_check(final, equilibrium, kernel=kernel, potential=potential)
    l1_constant = derived_l1_constant(lambda_, ckp['C_W']) if lambda_ > 0 and ckp['C_W'] < 1 else None
    summary = {'equilibrium': equilibrium.metadata(),
               'lambda': lambda_,
               'lambda_source': source,
               'energy_identity': {'DE_a': _energy_identity(series, 'DE_a'),
                                   'DE_a_discrete': _energy_identity(series, 'DE_a_discrete')},
               'dissipation_inequality': check_dissipation_inequality(series, lambda_),
               'energy_increase': series.energy_increase,
               'fit_window': list(window),
               'fits': {field: _fit(series, field, window) for field in ('E_gap', 'DE_az', 'L1')},
               'ckp': ckp,
               'derived_l1_constant': l1_constant}

    csv_dir = _csv_path(config, '')
    if csv_dir is not None:
        series.to_csv(os.path.join(csv_dir, 'diagnostics.csv'))
        equilibrium.to_csv(os.path.join(csv_dir, 'equilibrium.csv'))
        for t in pde.snapshot_times:
            if t not in series.snapshots:
                continue
            series.snapshots[t].to_csv(os.path.join(csv_dir, f'snapshot_t{t:g}.csv'))
    if config.outputs.json:
        series.write_sidecar(os.path.join(_output_dir(config), 'diagnostics.json'))
    _write_json(config, 'evolve.json', summary)

    inequality = summary['dissipation_inequality']
    print(f'lambda = {lambda_:.6g} ({source})', file=stream)
    for name, identity in summary['energy_identity'].items():
        print(f'energy identity ({name}): {identity["holds"]} (defect {identity["defect"]})', file=stream)
    print(f"dissipation inequality: {inequality['holds'] if inequality['applicable'] else 'inapplicable'}",
          file=stream)
    if inequality['applicable']:
        print(f"DE_az decay: {inequality['dissipation_holds']}"
              f" (first violation {inequality['first_dissipation_violation']})", file=stream)
    for field, fit in summary['fits'].items():
        if fit is not None:
            print(f"{field} rate = {fit['rate']:.4g} (r^2 = {fit['r_squared']:.4f})", file=stream)
    return summary


def cmd_particles(config, stream=None):
    """
    Runs the particle system and the kinetic solver from the same initial law and compares their x-marginals at the snapshot times.

    Returns the summary dict written to particles.json.
    """
    stream = stream or sys.stdout
    kernel, potential, domain = config.build_model()
    pde, particles = config.pde, config.particles
    grid = _phase_grid(config, domain)
    times = sorted(set(particles.snapshot_times) | {particles.t_end})
    solver_config = _solver_config(config, grid, particles.t_end, times)
    equilibrium = fixed_point(kernel, potential, grid, tol=pde.tol, max_iter=pde.max_iter, damping=pde.damping)
    initial = initial_density(pde.initial, grid, equilibrium)

    trajectory = simulate(particles.n, kernel, potential, particles.dt, particles.t_end, particles.seed, grid,
                          initial=initial, snapshot_times=times)
    series = run(solver_config, kernel, potential, equilibrium=equilibrium, initial=initial)

    comparisons = []
    for t in times:
        snapshot = trajectory.at(t)
        field = series.snapshots[t]
        row = {'t': t, 'l1': compare_marginals(snapshot, field), 'velocity_variance': snapshot.velocity_variance,
               'kinetic_velocity_variance': field.moment_v(2) - field.moment_v(1)**2}
        path = _csv_path(config, f'particles_t{t:g}.csv')
        if path is not None:
            snapshot.marginal_to_csv(path)
            row['histogram'] = os.path.basename(path)
        comparisons.append(row)
    summary = {'n': particles.n, 'seed': particles.seed, 'dt': particles.dt, 't_end': particles.t_end,
               'comparisons': comparisons}
    _write_json(config, 'particles.json', summary)
    for row in comparisons:
        print(f"t = {row['t']:g}: L1 = {row['l1']:.4g}, velocity variance = {row['velocity_variance']:.4g}",
              file=stream)
    return summary


def _dry_run(command, config):
    kernel, potential, domain = config.build_model()
    if command == 'certify' and config.direction.search is not None:
        search_grid(config.direction)
    if command in ('evolve', 'particles'):
        grid = _phase_grid(config, domain)
        t_end = config.pde.t_end if command == 'evolve' else config.particles.t_end
        _solver_config(config, grid, t_end, ())


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('config', help='Experiment file (JSON).')
    common.add_argument('--threads', type=int, default=None,
                        help='Worker threads. Falls back to HYPO_THREADS, then 1.')
    common.add_argument('--output-dir', default=None, help='Overrides outputs.directory.')
    common.add_argument('--dry-run', action='store_true', help='Validate the experiment without computing.')
    common.add_argument('--log-level', default='WARNING',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'])

    parser = argparse.ArgumentParser(prog='hypolab', description='Decay constant certification and kinetic simulation.')
    commands = parser.add_subparsers(dest='command', required=True)
    certify = commands.add_parser('certify', parents=[common], help='Certify the decay constant.')
    certify.add_argument('--require-feasible', action='store_true',
                         help='Exit with code 4 when the certificate is infeasible.')
    commands.add_parser('checks', parents=[common], help='Run the closed-form feasibility checkers.')
    commands.add_parser('evolve', parents=[common], help='Solve the kinetic equation and check the decay.')
    commands.add_parser('particles', parents=[common], help='Run the particle system and compare with the PDE.')
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format='%(levelname)s %(name)s: %(message)s')
    try:
        config = load_config(args.config)
        if args.output_dir is not None:
            config = dataclasses.replace(config, outputs=dataclasses.replace(config.outputs,
                                                                             directory=args.output_dir))
        threads = resolve_threads(args.threads)
        if args.dry_run:
            _dry_run(args.command, config)
            print('config valid')
            return EXIT_OK

        reports = {}
        if args.command == 'certify':
            certificate = cmd_certify(config, threads)
            reports['certificate'] = certificate.to_dict()
            exit_code = EXIT_INFEASIBLE if args.require_feasible and not certificate.feasible else EXIT_OK
        elif args.command == 'checks':
            reports['checks'] = {'checks': [result.to_dict() for result in cmd_checks(config)]}
            exit_code = EXIT_OK
        elif args.command == 'evolve':
            reports['evolve'] = cmd_evolve(config, threads)
            exit_code = EXIT_OK
        else:
            reports['particles'] = cmd_particles(config)
            exit_code = EXIT_OK
        if config.outputs.latex:
            build_report(reports, _output_dir(config), filename=f'report_{args.command}')
        return exit_code
    except HypolabError as err:
        logger.error('%s: %s', err.__class__.__name__, err)
        print(f'error: {err}', file=sys.stderr)
        return err.exit_code


if __name__ == '__main__':
    sys.exit(main())
