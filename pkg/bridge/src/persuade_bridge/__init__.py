"""Out-of-process glue for the persuasion-technique toolkit.

Two tools behind one command: a predictor runner that scores canonical
corpora into the score-TSV wire format, and a translator server speaking
the JSON-lines bridge protocol.  Coupling to the main toolkit is wire-only:
this package re-declares the label order, language codes, and file schemas
it must honor.
"""

__version__ = "0.1.0"


class BridgeError(Exception):
    """Expected failure: bad input, bad request, unknown model."""
