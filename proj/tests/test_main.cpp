#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "vmct/blas.hpp"

int main(int argc, char** argv) {
    vmct::blas_bootstrap(argc, argv);
    doctest::Context context;
    context.applyCommandLine(argc, argv);
    return context.run();
}
