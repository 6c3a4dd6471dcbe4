"""binlift: CFG- and data-mapping-augmented decompilation toolchain for
stripped x86 ELF binaries.

Pipeline: load ELF -> decode and segment a function's CFG -> recover the
data mapping table -> assemble the decompilation prompt -> (optionally)
query a completion endpoint -> score candidates by re-compilation,
re-execution, edit similarity, and pass@k.
"""

__version__ = "0.1.0"
