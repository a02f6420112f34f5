#pragma once

namespace rfat {

/// Routes log output to stderr at the level named by RFAT_LOG
/// (trace, debug, info, warn, error, off). Defaults to warn.
void init_logging();

}  // namespace rfat
