"""erika-bridge: converse with an LLM through a legacy typewriter's byte
protocol, hardware optional."""

__version__ = "0.1.0"
