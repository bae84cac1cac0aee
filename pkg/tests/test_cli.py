import json
import os

from pytest import approx, fixture

from hypolab.cli import *


def write_experiment(directory, data):
    path = os.path.join(str(directory), 'experiment.json')
    with open(path, 'w', encoding='utf8') as file:
        json.dump(data, file)
    return path


def read_json(directory, filename):
    with open(os.path.join(directory, filename), encoding='utf8') as file:
        return json.load(file)


@fixture
def output_dir(tmp_path):
    return str(tmp_path / 'out')


@fixture
def quadratic_experiment(tmp_path):
    return write_experiment(tmp_path, {
        'model': {'kernel': {'name': 'zero'},
                  'potential': {'name': 'quadratic', 'params': {'kappa': 0.9}},
                  'domain': {'kind': 'line', 'half_width': 5.0}},
        'direction': {'z1': 1.0, 'z2': 0.3},
        'certification': {'points_per_axis': 4}})


@fixture
def difference_search_experiment(tmp_path):
    return write_experiment(tmp_path, {
        'model': {'kernel': {'name': 'difference', 'params': {'alpha': 1.0}},
                  'potential': {'name': 'zero'}},
        'direction': {'search': {'z1': [0.2, 3.0, 4], 'z2': [0.2, 3.0, 4]}},
        'certification': {'points_per_axis': 4},
        'checks': {'wdiff_eig': 1.0}})


@fixture
def kinetic_experiment(tmp_path):
    return write_experiment(tmp_path, {
        'model': {'kernel': {'name': 'zero'},
                  'potential': {'name': 'cosine', 'params': {'kappa': 0.5}}},
        'certification': {'points_per_axis': 4},
        'pde': {'nx': 16, 'nv': 41, 'vmax': 6.0, 'dt': 0.05, 't_end': 1.0, 'stride': 2, 'lambda': 0.05,
                'initial': {'kind': 'perturbed', 'amplitude': 0.2}, 'snapshot_times': [0.5]},
        'particles': {'n': 200, 'dt': 0.05, 't_end': 0.5, 'seed': 1, 'snapshot_times': [0.25]},
        'outputs': {'latex': True}})


class TestCertify:
    def test_quadratic_potential(self, quadratic_experiment, output_dir, capsys):
        assert main(['certify', quadratic_experiment, '--output-dir', output_dir]) == EXIT_OK
        out = capsys.readouterr().out
        assert 'lambda = 0.123484 at z = (1, 0.3): feasible' in out
        assert 'lambda_U = 0.2028' in out
        assert 'interval = (-0.5450, 0.3017)' in out

    def test_certificate_file(self, quadratic_experiment, output_dir):
        main(['certify', quadratic_experiment, '--output-dir', output_dir])
        certificate = read_json(output_dir, 'certificate.json')
        assert {'lambda', 'z1', 'z2', 'argmin', 'witness', 'feasible', 'grid', 'checks'} <= set(certificate)
        assert certificate['lambda'] == approx(0.12348419, rel=1e-6)
        assert certificate['grid'] == {'kind': 'tensor', 'points_per_axis': 4,
                                       'domain': {'kind': 'line', 'half_width': 5.0, 'dimension': 1}}
        assert [check['name'] for check in certificate['checks']][0] == 'case1_gershgorin'

    def test_declared_lambda_U(self, tmp_path, output_dir, capsys):
        path = write_experiment(tmp_path, {
            'model': {'potential': {'name': 'quadratic', 'params': {'kappa': 0.9}},
                      'domain': {'kind': 'line', 'half_width': 5.0}},
            'certification': {'points_per_axis': 2},
            'checks': {'lambda_U': 0.2}})
        assert main(['certify', path, '--output-dir', output_dir]) == EXIT_OK
        assert 'interval = (-0.5376, 0.2976)' in capsys.readouterr().out

    def test_infeasible_search(self, difference_search_experiment, output_dir, capsys):
        assert main(['certify', difference_search_experiment, '--output-dir', output_dir]) == EXIT_OK
        assert ': infeasible' in capsys.readouterr().out
        certificate = read_json(output_dir, 'certificate.json')
        assert certificate['lambda'] <= 1e-8
        assert len(certificate['candidates']) == 16
        remark = [check for check in certificate['checks'] if check['name'] == 'remark3'][0]
        assert remark['feasible'] is False

    def test_require_feasible(self, difference_search_experiment, output_dir):
        args = ['certify', difference_search_experiment, '--output-dir', output_dir, '--require-feasible']
        assert main(args) == EXIT_INFEASIBLE

    def test_latex_report(self, tmp_path, output_dir):
        path = write_experiment(tmp_path, {
            'model': {'potential': {'name': 'cosine', 'params': {'kappa': 0.5}}},
            'certification': {'points_per_axis': 2},
            'outputs': {'latex': True, 'json': False}})
        assert main(['certify', path, '--output-dir', output_dir]) == EXIT_OK
        assert os.path.exists(os.path.join(output_dir, 'report_certify.tex'))
        assert not os.path.exists(os.path.join(output_dir, 'certificate.json'))


class TestChecks:
    def test_declared_bounds(self, tmp_path, output_dir, capsys):
        path = write_experiment(tmp_path, {
            'model': {'potential': {'name': 'quadratic', 'params': {'kappa': 0.99}},
                      'domain': {'kind': 'line', 'half_width': 5.0}},
            'checks': {'delta': 0.02, 'stated_threshold': 0.08}})
        assert main(['checks', path, '--output-dir', output_dir]) == EXIT_OK
        out = capsys.readouterr().out
        assert 'case2_schur' in out
        assert 'skipped: bounds not declared' in out
        results = {check['name']: check for check in read_json(output_dir, 'checks.json')['checks']}
        assert results['case2_schur']['feasible'] is True
        assert results['example2_schur_chain']['feasible'] is None


class TestErrors:
    def test_invalid_experiment(self, tmp_path, output_dir, capsys):
        path = write_experiment(tmp_path, {'model': {'kernel': {'name': 'gaussian'}}})
        assert main(['certify', path, '--output-dir', output_dir]) == 2
        assert capsys.readouterr().err.startswith('error:')

    def test_missing_file(self, tmp_path):
        assert main(['checks', str(tmp_path / 'missing.json')]) == 2

    def test_numerical_failure(self, tmp_path, output_dir):
        path = write_experiment(tmp_path, {
            'model': {'kernel': {'name': 'difference', 'params': {'alpha': 0.5}},
                      'potential': {'name': 'cosine', 'params': {'kappa': 1.0}}},
            'pde': {'nx': 8, 'nv': 21, 'dt': 0.05, 't_end': 0.5, 'max_iter': 1}})
        assert main(['evolve', path, '--output-dir', output_dir]) == 3

    def test_particle_snapshot_after_the_run(self, tmp_path, output_dir, capsys):
        path = write_experiment(tmp_path, {'model': {}, 'particles': {'t_end': 5.0, 'snapshot_times': [10]}})
        assert main(['particles', path, '--output-dir', output_dir]) == 2
        assert 'particles.snapshot_times' in capsys.readouterr().err

    def test_search_through_zero(self, tmp_path, output_dir):
        path = write_experiment(tmp_path, {'model': {}, 'direction': {'search': {'z1': [-1.0, 1.0, 3],
                                                                                 'z2': [0.2, 1.0, 2]}}})
        assert main(['certify', path, '--output-dir', output_dir]) == 2

    def test_dry_run(self, kinetic_experiment, output_dir, capsys):
        assert main(['evolve', kinetic_experiment, '--output-dir', output_dir, '--dry-run']) == EXIT_OK
        assert capsys.readouterr().out.strip() == 'config valid'
        assert not os.path.exists(output_dir)

    def test_dry_run_catches_solver_options(self, tmp_path):
        path = write_experiment(tmp_path, {'model': {}, 'pde': {'dt': 0.3, 't_end': 1.0}})
        assert main(['evolve', path, '--dry-run']) == 2


class TestEvolve:
    def test_outputs(self, kinetic_experiment, output_dir):
        assert main(['evolve', kinetic_experiment, '--output-dir', output_dir]) == EXIT_OK
        for filename in ('diagnostics.csv', 'equilibrium.csv', 'snapshot_t0.5.csv', 'diagnostics.json',
                         'evolve.json', 'report_evolve.tex'):
            assert os.path.exists(os.path.join(output_dir, filename)), filename

    def test_summary(self, kinetic_experiment, output_dir):
        main(['evolve', kinetic_experiment, '--output-dir', output_dir])
        summary = read_json(output_dir, 'evolve.json')
        assert summary['lambda'] == 0.05
        assert summary['lambda_source'] == 'config'
        assert summary['fit_window'] == [0.2, 1.0]
        assert summary['ckp']['C_W'] == 0
        assert summary['ckp']['applicable']
        assert summary['derived_l1_constant'] == approx(20**0.5)
        assert set(summary['energy_identity']) == {'DE_a', 'DE_a_discrete'}
        assert summary['dissipation_inequality']['applicable']
        assert summary['fits']['E_gap']['points'] == 9


class TestParticles:
    def test_comparisons(self, kinetic_experiment, output_dir, capsys):
        assert main(['particles', kinetic_experiment, '--output-dir', output_dir]) == EXIT_OK
        summary = read_json(output_dir, 'particles.json')
        assert [row['t'] for row in summary['comparisons']] == [0.25, 0.5]
        assert all(0 <= row['l1'] <= 2 for row in summary['comparisons'])
        assert all(row['kinetic_velocity_variance'] == approx(1.0, abs=0.05) for row in summary['comparisons'])
        assert os.path.exists(os.path.join(output_dir, 'particles_t0.25.csv'))
        assert 't = 0.5: L1 = ' in capsys.readouterr().out
