#include "fracdiff/mesh.hpp"

#include <cstdio>

int main() {
    std::puts("fracdiff: subcommands not wired up yet");
    return 1;
}
