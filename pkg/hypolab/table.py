"""
Booktabs tables for reports. Cells are set through bracket access, which selects an area of the table (a SelectedArea) on which number formats, rules and commands can be applied.
"""
import math
from numbers import Integral, Real

import numpy as np

from hypolab.tex import TexCommand, TexEnvironment, bold, build, escape, italic

MISSING = '--'


class midrule(TexCommand):
    def __init__(self):
        super().__init__('midrule')


class cmidrule(TexCommand):
    def __init__(self, start, stop, trim=''):
        """
        Args:
            start, stop (int): Python-like column indices of the rule.
            trim (str): Trimming option ('l', 'r' or 'lr').
        """
        super().__init__('cmidrule', f'{start + 1}-{stop}')
        self.trim = trim

    def build(self):
        trim = f'({self.trim})' if self.trim else ''
        return f'\\cmidrule{trim}{{{self.parameters[0]}}}'


class Tabular(TexEnvironment):
    """
    'tabular' environment whose cells are stored in a numpy object array.

    Numbers are formatted with 'float_format' (or 'int_format') unless a cell has its own format specification. None and NaN render as '--', booleans as 'yes' and 'no'. Strings are escaped unless 'escape_text' is False.
    """
    def __init__(self, shape=(1, 1), alignment='c', float_format='.4g', int_format='d', escape_text=True):
        """
        Args:
            shape (tuple of 2 ints): Shape of the table.
            alignment (str or sequence of str): Alignment of every column, or one alignment per column.
            float_format (str): Default format specification of floats.
            int_format (str): Default format specification of integers.
            escape_text (bool): Whether string cells are escaped.
        """
        super().__init__('tabular')
        self.add_package('booktabs')
        self.shape = tuple(shape)
        self.alignment = [alignment] * self.shape[1] if isinstance(alignment, str) else list(alignment)
        if len(self.alignment) != self.shape[1]:
            raise ValueError(f'Expected {self.shape[1]} column alignments, got {len(self.alignment)}.')
        self.float_format = float_format
        self.int_format = int_format
        self.escape_text = escape_text

        self.data = np.full(self.shape, '', dtype=object)
        self.formats_spec = np.full(self.shape, None, dtype=object)
        self.commands = np.empty(self.shape, dtype=object)
        for i, j in np.ndindex(self.shape):
            self.commands[i, j] = []
        self.rules = {}

    def __getitem__(self, idx):
        return SelectedArea(self, idx)

    def __setitem__(self, idx, value):
        self.data[idx] = value

    def __repr__(self):
        return repr(self.data)

    def _format_cell(self, i, j, content):
        if content is None:
            return MISSING
        if isinstance(content, (bool, np.bool_)):
            return 'yes' if content else 'no'
        if isinstance(content, (Real, Integral)):
            if isinstance(content, Real) and not isinstance(content, Integral) and math.isnan(content):
                return MISSING
            spec = self.formats_spec[i, j]
            if spec is None:
                spec = self.int_format if isinstance(content, Integral) else self.float_format
            return format(content, spec)
        if isinstance(content, str):
            return escape(content) if self.escape_text else content
        return build(content, self)

    def _apply_commands(self, i, j, content):
        for command in self.commands[i, j]:
            content = build(command(content), self)
        return content

    def build(self):
        tex = [build(self.head) + '{' + ''.join(self.alignment) + '}', r'\toprule']
        for i, row in enumerate(self.data):
            cells = [self._apply_commands(i, j, self._format_cell(i, j, content)) for j, content in enumerate(row)]
            tex.append(' & '.join(cells) + r' \\')
            for rule in self.rules.get(i, []):
                tex.append(build(rule, self))
        tex += [r'\bottomrule', self.tail]
        return self._build_list(tex)


class SelectedArea:
    """
    View on a rectangular area of a Tabular.
    """
    def __init__(self, tabular, idx):
        self.tabular = tabular
        if isinstance(idx, tuple):
            i, j = idx
        else:
            i, j = idx, slice(None)
        i = slice(i, i + 1) if isinstance(i, Integral) else i
        j = slice(j, j + 1) if isinstance(j, Integral) else j
        if not isinstance(i, slice) or not isinstance(j, slice):
            raise ValueError(f'Invalid index {idx}. It should be an integer, a slice or a tuple of them.')
        self.slices = (i, j)

    @property
    def data(self):
        return self.tabular.data[self.slices]

    @property
    def idx(self):
        start_i, stop_i, _ = self.slices[0].indices(self.tabular.shape[0])
        start_j, stop_j, _ = self.slices[1].indices(self.tabular.shape[1])
        return (start_i, start_j), (stop_i, stop_j)

    def __repr__(self):
        return repr(self.data)

    @property
    def format_spec(self):
        return self.tabular.formats_spec[self.slices]

    @format_spec.setter
    def format_spec(self, format_spec):
        self.tabular.formats_spec[self.slices] = format_spec

    def add_rule(self, position='below', trim_left=False, trim_right=False):
        """
        Adds a rule below or above the area. A full-width untrimmed rule is a midrule, anything else a cmidrule.

        Returns self.
        """
        (start_i, start_j), (stop_i, stop_j) = self.idx
        row = stop_i - 1 if position == 'below' else start_i - 1
        trim = ('l' if trim_left else '') + ('r' if trim_right else '')
        if start_j == 0 and stop_j == self.tabular.shape[1] and not trim:
            rule = midrule()
        else:
            rule = cmidrule(start_j, stop_j, trim)
        self.tabular.rules.setdefault(row, []).append(rule)
        return self

    def apply_command(self, command):
        """
        Applies a command to every cell of the area at build time, after number formatting. Commands of a cell are applied in the order they were added.

        Args:
            command (TexCommand class or callable): Receives the built cell content and returns a TexObject or a string.

        Returns self.
        """
        for cell_commands in self.tabular.commands[self.slices].flat:
            cell_commands.append(command)
        return self

    def highlight_best(self, mode='high', best='bold', atol=0, rtol=1e-9):
        """
        Highlights the best number(s) of the area. Text cells are ignored. Values within tolerance of the best are highlighted too.

        Args:
            mode (str, either 'high' or 'low'): Whether the best value is the largest or the smallest.
            best (str or callable): 'bold', 'italic' or a command applied to the best cells.

        Returns self.
        """
        if mode not in ('high', 'low'):
            raise ValueError(f"Invalid mode '{mode}'. Should be 'high' or 'low'.")
        command = {'bold': bold, 'italic': italic}.get(best, best)
        (start_i, start_j), _ = self.idx
        numbers = {(i, j): float(value) for (i, j), value in np.ndenumerate(self.data)
                   if isinstance(value, (Real, Integral)) and not isinstance(value, (bool, np.bool_))
                   and not math.isnan(value)}
        if not numbers:
            return self
        target = max(numbers.values()) if mode == 'high' else min(numbers.values())
        for (i, j), value in numbers.items():
            if np.isclose(value, target, rtol=rtol, atol=atol):
                self.tabular.commands[start_i + i, start_j + j].append(command)
        return self


class Table(TexEnvironment):
    """
    Floating 'table' environment holding a centered Tabular and a caption above it. Item access and unknown attributes are forwarded to the tabular.
    """
    def __init__(self, shape=(1, 1), alignment='c', float_format='.4g', caption='', label='', position='h!', **kwargs):
        """
        Args:
            shape, alignment, float_format: See Tabular.
            caption (str): Caption of the table, escaped.
            label (str): Label of the table, prefixed by 'table:'.
            position (str): Float placement specifier.
            kwargs: Other Tabular options.
        """
        super().__init__('table', options=position, label=label)
        self.caption = caption
        self.tabular = Tabular(shape, alignment=alignment, float_format=float_format, **kwargs)

    def __getattr__(self, name):
        if name == 'tabular':
            raise AttributeError(name)
        return getattr(self.tabular, name)

    def __getitem__(self, idx):
        return self.tabular[idx]

    def __setitem__(self, idx, value):
        self.tabular[idx] = value

    def build(self):
        parts = [self.head, r'\centering']
        if self.caption:
            parts.append(TexCommand('caption', escape(self.caption)))
        parts += [self.label, self.tabular, self.tail]
        return self._build_list(parts)
