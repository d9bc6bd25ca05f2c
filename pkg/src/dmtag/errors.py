"""Exception hierarchy.

Every domain failure raises a subclass of :class:`DmTagError`.  The CLI prints
the class name verbatim, so names are part of the public interface.
"""


class DmTagError(Exception):
    """Base class for all domain errors."""


# corpus
class MalformedLine(DmTagError):
    def __init__(self, line_no, detail=""):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {detail}" if detail else f"line {line_no}")


class UnknownTag(DmTagError):
    def __init__(self, tag, line_no=None):
        self.tag = tag
        self.line_no = line_no
        where = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"tag {tag!r} is not in the tagset{where}")


class EmptyTurn(DmTagError):
    def __init__(self, line_no):
        self.line_no = line_no
        super().__init__(f"line {line_no}: turn has no tokens")


class TooFewDialogs(DmTagError):
    pass


# clustering
class EmptyStats(DmTagError):
    pass


class UnmergeableClasses(DmTagError):
    pass


class TooManyItems(DmTagError):
    pass


class UnknownItem(DmTagError):
    pass


# dtree
class EmptyTraining(DmTagError):
    pass


class EmptyHeldout(DmTagError):
    pass


class ArityMismatch(DmTagError):
    pass


# model
class InsufficientData(DmTagError):
    pass


class NoWordTree(DmTagError):
    pass


class EmptyInput(DmTagError):
    pass


class ZeroProbability(DmTagError):
    pass


class CorruptModel(DmTagError):
    pass


class UnsupportedVersion(DmTagError):
    pass


# eval / analysis
class TagsetMismatch(DmTagError):
    pass


class InvalidSpec(DmTagError):
    pass


class NoAnnotations(DmTagError):
    pass
