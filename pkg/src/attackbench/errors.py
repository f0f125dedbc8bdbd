"""Exception types shared across the package."""


class FileFormatError(Exception):
    """A checkpoint, archive, or IDX file is malformed or unreadable.

    Raised with a message naming the problem (bad magic, truncation,
    unsupported version, inconsistent dimensions). Argument and numeric
    domain errors use plain ValueError instead; the CLI maps ValueError
    to exit code 1 and FileFormatError/OSError to exit code 2.
    """
