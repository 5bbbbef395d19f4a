"""Exception types shared across the mapreplay package."""


class MapReplayError(Exception):
    """Base class for all mapreplay errors."""


class ConfigError(MapReplayError, ValueError):
    """Invalid map or harness configuration."""


class TraceFormatError(MapReplayError):
    """A trace file or byte stream violates the on-disk format.

    `offset` is the byte position at which parsing failed: absolute for the
    uncompressed header, relative to the decompressed payload otherwise.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"at offset {offset}: {message}"
        super().__init__(message)
        self.offset = offset


class TraceIntegrityError(MapReplayError):
    """An opcode stream references a slot or object that is not live."""


class FidelityError(MapReplayError):
    """Replay produced an outcome that differs from the recorded one.

    `op_index` is the index of the first mismatching opcode triple.
    """

    def __init__(self, message: str, op_index: int | None = None):
        if op_index is not None:
            message = f"op {op_index}: {message}"
        super().__init__(message)
        self.op_index = op_index
