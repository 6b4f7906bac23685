"""
Storage Toolkit

Cost-optimal control of an electrical energy storage under day-ahead prices with
discrete purchase quantities.
"""
