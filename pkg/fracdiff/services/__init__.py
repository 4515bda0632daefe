"""Service-layer modules for the forward solver and the inverse problem."""
