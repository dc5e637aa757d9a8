// LD_PRELOAD shim that refuses every network operation and appends one line
// per attempt to the file named by $VPSYNTH_NET_LOG.
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fcntl.h>
#include <netdb.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

namespace {

void record(const char* what) {
    const char* path = std::getenv("VPSYNTH_NET_LOG");
    if (!path) return;
    const int fd = ::open(path, O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) return;
    const auto n = std::strlen(what);
    [[maybe_unused]] auto w1 = ::write(fd, what, n);
    [[maybe_unused]] auto w2 = ::write(fd, "\n", 1);
    ::close(fd);
}

}  // namespace

extern "C" {

int socket(int domain, int, int) {
    // Local IPC is not network traffic.
    if (domain == AF_UNIX) {
        errno = EACCES;
        return -1;
    }
    record("socket");
    errno = EACCES;
    return -1;
}

int connect(int, const struct sockaddr*, socklen_t) {
    record("connect");
    errno = EACCES;
    return -1;
}

int getaddrinfo(const char*, const char*, const struct addrinfo*, struct addrinfo**) {
    record("getaddrinfo");
    return EAI_FAIL;
}

struct hostent* gethostbyname(const char*) {
    record("gethostbyname");
    return nullptr;
}

ssize_t sendto(int, const void*, size_t, int, const struct sockaddr*, socklen_t) {
    record("sendto");
    errno = EACCES;
    return -1;
}

}
