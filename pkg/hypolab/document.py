import logging
import os

from hypolab.tex import TexCommand, TexEnvironment, TexFile, build, escape

logger = logging.getLogger(__name__)


class Document(TexEnvironment):
    """
    LaTeX document. Packages and preamble lines of the objects nested in the body are collected when the document is built.
    """
    def __init__(self, filename, filepath='.', title=None, doc_type='article', options=(), **kwoptions):
        r"""
        Args:
            filename (str): Name of the file without extension.
            filepath (str): Directory where the .tex file is saved and compiled.
            title (str): Title typeset with \maketitle. No title block when omitted.
            doc_type (str): LaTeX document class.
            options (tuple of str): Options of the document class.
            kwoptions (dict of str): Keyword options of the document class.
        """
        super().__init__('document')
        self.filename = filename
        self.filepath = filepath
        self.file = TexFile(filename, filepath)
        self.doc_class = TexCommand('documentclass', doc_type, options=options, options_pos='first', **kwoptions)
        self.title = title

        self.add_package('inputenc', 'utf8')
        self.add_package('amsmath')
        self.set_margins('2.5cm')

    def __repr__(self):
        return f'Document {self.filename}'

    def set_margins(self, margins='2.5cm', top=None, bottom=None, left=None, right=None):
        self.add_package('geometry', top=top or margins, bottom=bottom or margins,
                         left=left or margins, right=right or margins)

    def new_section(self, name, label=''):
        return self.new(Section(name, label=label))

    def build(self, save_to_disk=True, compile_to_pdf=False, delete_files=(), build_from_dir='source'):
        """
        Builds the document and optionally saves and compiles it.

        Args:
            save_to_disk (bool): Whether to write the .tex file.
            compile_to_pdf (bool): Whether to call pdflatex on the saved file. Only used if 'save_to_disk' is True.
            delete_files (str or sequence of str): Extensions ('tex', 'aux', 'log') of the files to delete after compilation, or 'all'.
            build_from_dir (str, either 'source' or 'cwd'): See TexFile.compile_to_pdf.

        Returns the .tex string.
        """
        body = list(self.body)
        title = []
        if self.title is not None:
            title = [TexCommand('title', escape(self.title)), TexCommand('date', TexCommand('today'))]
            body.insert(0, TexCommand('maketitle'))
        tex = self._build_list([self.head, self._build_list(body), self.tail])
        preamble = '\n'.join([self.build_preamble()] + [build(line) for line in title])
        tex = build(self.doc_class) + '\n' + preamble + '\n' + tex

        if save_to_disk:
            self.file.save(tex)
            logger.info('Wrote %s', self.file.path)
            if compile_to_pdf:
                self.file.compile_to_pdf(build_from_dir=build_from_dir)
                if isinstance(delete_files, str):
                    delete_files = ['tex', 'aux', 'log'] if delete_files == 'all' else [delete_files]
                for ext in delete_files:
                    if ext in ('tex', 'aux', 'log'):
                        os.remove(os.path.join(self.filepath, f'{self.filename}.{ext}'))
        return tex


class Section(TexEnvironment):
    r"""
    Sectioning unit, built as '\section{name}' followed by its body.
    """
    level = 'section'

    def __init__(self, name, label=''):
        super().__init__(self.level, label=label)
        self.name = name
        self.label.prefix = 'sec'

    def new_subsection(self, name, label=''):
        return self.new(Subsection(name, label=label))

    def build(self):
        head = TexCommand(self.level, escape(self.name))
        return self._build_list([head, self.label, self._build_list(self.body)])


class Subsection(Section):
    level = 'subsection'
