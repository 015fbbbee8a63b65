#define REMEMBRA_KERNEL_NS omp
#ifdef _OPENMP
#define REMEMBRA_PRAGMA(x) _Pragma(#x)
#define REMEMBRA_OMP(clauses) REMEMBRA_PRAGMA(omp clauses)
#else
#define REMEMBRA_OMP(clauses)
#endif
#include "kernels_impl.inc"
