"""Build script: compiles the optional C allocation kernel when Cython and a
C compiler are available, and falls back to a pure-Python install otherwise."""

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the accelerator if we can; never fail the install over it."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        import warnings

        warnings.warn(
            f"randomkit: compiled kernel unavailable ({exc!r}); "
            "falling back to the pure-Python engine"
        )


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "randomkit._engine_cy",
        ["src/randomkit/_engine_cy.pyx"],
        # -ffp-contract=off keeps double arithmetic bit-identical to CPython's
        # (no fused multiply-add), which the engine's exactness tests rely on.
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
