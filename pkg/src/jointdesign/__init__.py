"""Joint design of information and contracts."""
