#include <cstdio>

int main() {
    std::printf("scorevae cli placeholder\n");
    return 0;
}
