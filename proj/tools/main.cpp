#include <vector>

#include "cscl/cli.hpp"

int main(int argc, char** argv) {
    return cscl::run(std::vector<std::string>(argv + 1, argv + argc));
}
