#pragma once
#ifdef __cplusplus
extern "C" {
#endif
const char* emseg_version(void);
#ifdef __cplusplus
}
#endif
