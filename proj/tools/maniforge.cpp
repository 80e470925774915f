#include "maniforge/run.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return maniforge::cli_dispatch(args);
}
