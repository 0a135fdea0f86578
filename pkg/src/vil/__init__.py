"""Virtual-image learning for long-tailed human-object interaction
detection: curation filters, annotation correction, and teacher-student
training, with a desk-scale procedural world for end-to-end runs."""

__version__ = "0.1.0"
