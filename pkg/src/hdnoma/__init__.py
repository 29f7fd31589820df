"""Uplink hybrid-domain NOMA simulation and resource allocation."""
