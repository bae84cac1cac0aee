"""
LaTeX rendering of the JSON reports written by the command line: certificates, checker verdicts, direction searches and diagnostics summaries.
"""
import logging

from hypolab.document import Document
from hypolab.table import Table
from hypolab.tex import italic

logger = logging.getLogger(__name__)


def verdict(feasible):
    if feasible is None:
        return 'skipped'
    return 'feasible' if feasible else 'infeasible'


def _short(value):
    if isinstance(value, float):
        return format(value, '.4g')
    if isinstance(value, (list, tuple)):
        return '(' + ', '.join(_short(v) for v in value) + ')'
    return str(value)


def certificate_table(certificate):
    """
    Two-column table of a certificate dict, as written to certificate.json.
    """
    x, y = certificate['argmin']
    rows = [('lambda', certificate['lambda']),
            ('z1', certificate['z1']),
            ('z2', certificate['z2']),
            ('argmin x', _short(x)),
            ('argmin y', _short(y)),
            ('feasible', certificate['feasible']),
            ('grid', ', '.join(f'{key}={_short(value)}' for key, value in certificate['grid'].items()
                               if not isinstance(value, dict)))]
    table = Table((len(rows) + 1, 2), alignment='lr', caption='Certified decay constant', label='certificate')
    table[0] = ['quantity', 'value']
    table[0].add_rule()
    for i, row in enumerate(rows, start=1):
        table[i] = list(row)
    table[1, 1].format_spec = '.6g'
    return table


def checks_table(checks):
    """
    One row per checker with its verdict and the values it computed. Rows of infeasible checkers are in italic.
    """
    table = Table((len(checks) + 1, 4), alignment='llll', caption='Closed-form feasibility checks', label='checks')
    table[0] = ['checker', 'verdict', 'values', 'note']
    table[0].add_rule()
    for i, check in enumerate(checks, start=1):
        values = ', '.join(f'{key}={_short(value)}' for key, value in check['values'].items())
        table[i] = [check['name'], verdict(check['feasible']), values, check['note']]
        if check['feasible'] is False:
            table[i].apply_command(italic)
    return table


def search_table(candidates):
    """
    Certified decay constant of every candidate of a direction search, the best one in bold.
    """
    table = Table((len(candidates) + 1, 3), alignment='rrr', caption='Direction search', label='search')
    table[0] = ['z1', 'z2', 'lambda']
    table[0].add_rule()
    for i, candidate in enumerate(candidates, start=1):
        table[i] = [candidate['z1'], candidate['z2'], candidate['lambda']]
    table[1:, 2].highlight_best('high', 'bold')
    return table


def evolve_tables(summary):
    """
    Verdicts and rate fits of an evolve summary, as written to evolve.json.
    """
    inequality = summary['dissipation_inequality']
    applicable = inequality['applicable']
    verdicts = [('energy identity (stencil)', summary['energy_identity']['DE_a']['holds']),
                ('energy identity (discrete)', summary['energy_identity']['DE_a_discrete']['holds']),
                ('dissipation inequality', verdict(inequality['holds']) if applicable else 'inapplicable'),
                ('DE_az decay', inequality['dissipation_holds'] if applicable else 'inapplicable'),
                ('lambda', inequality['lambda']),
                ('energy increase', summary['energy_increase']),
                ('derived L1 constant', summary['derived_l1_constant'])]
    verdict_table = Table((len(verdicts) + 1, 2), alignment='lr', caption='Kinetic run verdicts', label='verdicts')
    verdict_table[0] = ['quantity', 'value']
    verdict_table[0].add_rule()
    for i, row in enumerate(verdicts, start=1):
        verdict_table[i] = list(row)

    fits = summary['fits']
    fit_table = Table((len(fits) + 1, 4), alignment='lrrr', caption='Fitted decay rates', label='fits')
    fit_table[0] = ['quantity', 'rate', 'r squared', 'points']
    fit_table[0].add_rule()
    for i, (name, fit) in enumerate(fits.items(), start=1):
        fit_table[i] = [name] + ([fit['rate'], fit['r_squared'], fit['points']] if fit else [None, None, None])
    return verdict_table, fit_table


def particles_table(summary):
    comparisons = summary['comparisons']
    table = Table((len(comparisons) + 1, 3), alignment='rrr', caption='Particle and PDE marginals', label='particles')
    table[0] = ['t', 'L1 discrepancy', 'velocity variance']
    table[0].add_rule()
    for i, row in enumerate(comparisons, start=1):
        table[i] = [row['t'], row['l1'], row['velocity_variance']]
    return table


def build_report(reports, directory, filename='report', title='hypolab report', compile_to_pdf=False):
    """
    Writes a LaTeX document with one section per report found.

    Args:
        reports (dict): Any of 'certificate', 'checks', 'evolve' and 'particles', holding the JSON dicts of the corresponding commands.
        directory (str): Output directory.
        filename (str): Name of the .tex file without extension.
        title (str): Document title.
        compile_to_pdf (bool): Whether to call pdflatex.

    Returns the .tex string.
    """
    doc = Document(filename, filepath=directory, title=title)
    if 'certificate' in reports:
        certificate = reports['certificate']
        section = doc.new_section('Certificate', label='certificate')
        section += certificate_table(certificate)
        if certificate.get('candidates'):
            section += search_table(certificate['candidates'])
        if certificate.get('checks'):
            section += checks_table(certificate['checks'])
    if 'checks' in reports:
        section = doc.new_section('Feasibility checks', label='checks')
        section += checks_table(reports['checks']['checks'])
    if 'evolve' in reports:
        section = doc.new_section('Kinetic run', label='evolve')
        for table in evolve_tables(reports['evolve']):
            section += table
    if 'particles' in reports:
        section = doc.new_section('Particles', label='particles')
        section += particles_table(reports['particles'])
    logger.info('Building report %s with sections %s', filename, sorted(reports))
    return doc.build(save_to_disk=True, compile_to_pdf=compile_to_pdf)
