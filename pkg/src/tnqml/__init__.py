"""Tree and MPS tensor-network circuits for qubit-efficient classification and sampling."""

__version__ = "0.1.0"
