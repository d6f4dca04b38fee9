import os
import sys

# ctest points PGS_BUILD_PKG at the freshly built module; an editable install's
# import hook would otherwise shadow it.
if os.environ.get("PGS_BUILD_PKG"):
    sys.meta_path[:] = [f for f in sys.meta_path if "editable" not in type(f).__module__]
    sys.path.insert(0, os.environ["PGS_BUILD_PKG"])
