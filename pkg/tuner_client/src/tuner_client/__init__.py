"""Out-of-process tuner plugin for the optimizer service.

Everything here talks to the service exclusively through its public HTTP
endpoints; the only shared contract is the published parameter registry
and the JSON payload shapes.
"""

__version__ = "0.1.0"
