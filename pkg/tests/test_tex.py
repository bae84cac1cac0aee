from inspect import cleandoc

from pytest import raises

from hypolab.tex import *


class TestEscape:
    def test_underscore_and_percent(self):
        assert escape('case2_schur') == r'case2\_schur'
        assert escape('50%') == r'50\%'

    def test_plain_text_is_unchanged(self):
        assert escape('lambda = 0.12') == 'lambda = 0.12'

    def test_backslash(self):
        assert escape('a\\b') == r'a\textbackslash{}b'


class TestTexObject:
    def setup_method(self):
        self.tex_obj = TexObject('DefaultTexObject')

    def test_add_package_without_options(self):
        self.tex_obj.add_package('booktabs')
        assert self.tex_obj.packages['booktabs'].options == []
        assert self.tex_obj.packages['booktabs'].kwoptions == {}

    def test_add_package_twice_merges_options(self):
        self.tex_obj.add_package('geometry', 'a4paper', top='2cm')
        self.tex_obj.add_package('geometry', 'a4paper', 'landscape', bottom='3cm')
        package = self.tex_obj.packages['geometry']
        assert package.options == ['a4paper', 'landscape']
        assert package.kwoptions == {'top': '2cm', 'bottom': '3cm'}

    def test_build_preamble_removes_duplicates(self):
        self.tex_obj.add_package('amsmath')
        self.tex_obj.add_to_preamble(r'\newcommand{\R}{\mathbb{R}}')
        self.tex_obj.add_to_preamble(r'\newcommand{\R}{\mathbb{R}}')
        assert self.tex_obj.build_preamble() == cleandoc(r'''
            \usepackage{amsmath}
            \newcommand{\R}{\mathbb{R}}''')

    def test_repr(self):
        assert repr(self.tex_obj) == 'TexObject DefaultTexObject'

    def test_build_empty(self):
        assert self.tex_obj.build() == ''


class TestTexCommand:
    def test_command_default(self):
        assert TexCommand('toprule').build() == r'\toprule'

    def test_command_with_parameters(self):
        assert TexCommand('usepackage', 'booktabs').build() == r'\usepackage{booktabs}'
        assert TexCommand('begin', 'tabular', 'lr').build() == r'\begin{tabular}{lr}'

    def test_options_first(self):
        command = TexCommand('cmd', 'p1', 'p2', options=('spam',), top='2cm', options_pos='first')
        assert command.build() == r'\cmd[spam, top=2cm]{p1}{p2}'

    def test_options_second(self):
        command = TexCommand('cmd', 'p1', 'p2', options=('spam',), top='2cm', options_pos='second')
        assert command.build() == r'\cmd{p1}[spam, top=2cm]{p2}'

    def test_options_last(self):
        command = TexCommand('cmd', 'p1', 'p2', options='spam', options_pos='last')
        assert command.build() == r'\cmd{p1}{p2}[spam]'

    def test_invalid_options_pos(self):
        with raises(ValueError):
            TexCommand('cmd', options_pos='middle')

    def test_nested_commands(self):
        assert TexCommand('date', TexCommand('today')).build() == r'\date{\today}'

    def test_bold_and_italic(self):
        assert bold('best').build() == r'\textbf{best}'
        assert italic('infeasible').build() == r'\textit{infeasible}'

    def test_package(self):
        assert Package('inputenc', 'utf8').build() == r'\usepackage[utf8]{inputenc}'


class TestBuild:
    def test_build_string(self):
        assert build('spam') == 'spam'
        assert build(0.5) == '0.5'

    def test_build_passes_packages_to_parent(self):
        parent = TexObject('parent')
        child = TexObject('child')
        child.add_package('booktabs')
        child.add_to_preamble(r'\setlength{\tabcolsep}{4pt}')
        build(child, parent)
        assert 'booktabs' in parent.packages
        assert parent.preamble == [r'\setlength{\tabcolsep}{4pt}']


class TestTexEnvironment:
    def test_build_with_body(self):
        env = TexEnvironment('center')
        env += 'spam'
        env.add_text(bold('egg'))
        assert env.build() == cleandoc(r'''
            \begin{center}
            spam
            \textbf{egg}
            \end{center}''')

    def test_label(self):
        env = TexEnvironment('equation', label='energy')
        env.append('E = 0')
        assert env.build() == cleandoc(r'''
            \begin{equation}
            \label{equation:energy}
            E = 0
            \end{equation}''')

    def test_empty_label_is_omitted(self):
        assert Label('').build() == ''

    def test_new_returns_object(self):
        env = TexEnvironment('center')
        inner = env.new(TexEnvironment('itemize'))
        assert inner in env.body
        assert env.build() == cleandoc(r'''
            \begin{center}
            \begin{itemize}
            \end{itemize}
            \end{center}''')

    def test_nested_packages_are_collected(self):
        env = TexEnvironment('center')
        inner = env.new(TexEnvironment('tabular'))
        inner.add_package('booktabs')
        env.build()
        assert 'booktabs' in env.packages


class TestTexFile:
    def test_save(self, tmp_path):
        tex_file = TexFile('report', str(tmp_path / 'out'))
        tex_file.save('spam')
        with open(tex_file.path, encoding='utf8') as file:
            assert file.read() == 'spam'

    def test_invalid_build_dir(self, tmp_path):
        with raises(ValueError):
            TexFile('report', str(tmp_path)).compile_to_pdf(build_from_dir='home')
