"""Corkscrew-adhesion multirotor landing simulator and experiment harness."""
