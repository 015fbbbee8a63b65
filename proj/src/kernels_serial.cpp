#define REMEMBRA_KERNEL_NS serial
#define REMEMBRA_OMP(clauses)
#include "kernels_impl.inc"
