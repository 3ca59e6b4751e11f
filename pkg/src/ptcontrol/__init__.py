"""Prescribed-time control of linear systems in canonical form."""
