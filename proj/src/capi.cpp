#include "emseg/emseg.h"

extern "C" const char* emseg_version(void) { return "0.1.0"; }
