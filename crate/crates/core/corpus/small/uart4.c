// UART receiver with a software FIFO filled from the RX interrupt.

const uint8 RX0_SIZE = 4;

uint8 URX0_IEN @ 0xC1.7;
uint8 UDR @ 0xC6;

uint8 rx_buff[RX0_SIZE];
uint8 rx_in;
uint8 rx_out;

uint8 getNextPos(uint8 pos, uint8 size) {
    pos++;
    if (pos >= size) {
        return 0;
    }
    return pos;
}

uint8 isEmpty() {
    return rx_out == vu8(rx_in);
}

uint8 getByte() {
    uint8 data;
    while (isEmpty());
    data = vu8(rx_buff[rx_out]);
    vu8(rx_buff[rx_out]) = 0;       // clear slot
    vu8(rx_out) = getNextPos(rx_out, RX0_SIZE);
    URX0_IEN = 1;
    return data;
}

ISR(USART0_RX_vect) {
    uint8 i = rx_in;
    i = getNextPos(i, RX0_SIZE);
    if (i == rx_out) {               // overflow
        URX0_IEN = 0;
        return;
    }
    rx_buff[rx_in] = UDR;
    rx_in = i;
}

void main() {
    uint8 c;
    URX0_IEN = 1;
    while (1) {
        c = getByte();
    }
}
