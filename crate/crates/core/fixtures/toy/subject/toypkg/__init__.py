"""A tiny package used as a stand-in subject library."""
